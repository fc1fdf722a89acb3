#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "mp2/common.hpp"
#include "mp2/math.hpp"
#include "mp2/rng.hpp"
#include "mp2/target.hpp"

namespace mp2 {

struct SamplerConfig {
  int chains = 4;
  int iterations = 2000;  // per chain, warmup included
  int warmup = -1;        // default: iterations / 2
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  int resolved_warmup() const { return warmup >= 0 ? warmup : iterations / 2; }

  void validate() const {
    if (chains < 1) throw ValidationError("sampler needs at least one chain");
    if (iterations < 2) throw ValidationError("sampler needs at least two iterations");
    if (resolved_warmup() >= iterations)
      throw ValidationError("warmup must be smaller than the iteration count");
    if (!(target_accept > 0.0 && target_accept < 1.0))
      throw ValidationError("target acceptance must lie in (0, 1)");
    if (max_tree_depth < 1 || max_tree_depth > 14)
      throw ValidationError("max tree depth must lie in [1, 14]");
  }
};

// Post-warmup draws, reported in constrained space: chains x draws x columns.
struct DrawsMatrix {
  int n_chains = 0;
  int n_draws = 0;  // per chain
  int n_cols = 0;
  std::vector<std::string> names;
  std::vector<double> data;             // [chain][draw][col]
  std::vector<std::uint8_t> divergent;  // [chain][draw]

  double at(int chain, int draw, int col) const {
    return data[(static_cast<std::size_t>(chain) * n_draws + draw) * n_cols + col];
  }

  double* row(int chain, int draw) {
    return &data[(static_cast<std::size_t>(chain) * n_draws + draw) * n_cols];
  }

  const double* row(int chain, int draw) const {
    return &data[(static_cast<std::size_t>(chain) * n_draws + draw) * n_cols];
  }

  int total_draws() const { return n_chains * n_draws; }

  int column_index(const std::string& name) const {
    for (std::size_t c = 0; c < names.size(); ++c)
      if (names[c] == name) return static_cast<int>(c);
    return -1;
  }

  std::vector<double> chain_column(int chain, int col) const {
    std::vector<double> out(static_cast<std::size_t>(n_draws));
    for (int d = 0; d < n_draws; ++d) out[static_cast<std::size_t>(d)] = at(chain, d, col);
    return out;
  }

  // Merged over chains, chain-major order.
  std::vector<double> column(int col) const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(total_draws()));
    for (int c = 0; c < n_chains; ++c)
      for (int d = 0; d < n_draws; ++d) out.push_back(at(c, d, col));
    return out;
  }
};

struct ChainDiagnostics {
  double step_size = 0.0;
  int divergences = 0;
  int max_depth_hits = 0;
  double mean_accept = 0.0;
};

struct SampleResult {
  DrawsMatrix draws;
  std::vector<ChainDiagnostics> chain_diag;

  int total_divergences() const {
    int s = 0;
    for (const auto& d : chain_diag) s += d.divergences;
    return s;
  }
};

namespace detail {

// Step-size adaptation by dual averaging (Hoffman & Gelman 2014, Algorithm 6
// constants: gamma 0.05, t0 10, kappa 0.75).
class DualAverage {
 public:
  DualAverage(double epsilon_init, double delta)
      : log_epsilon_(std::log(epsilon_init)),
        log_epsilon_bar_(std::log(epsilon_init)),
        mu_(std::log(10.0 * epsilon_init)),
        delta_(delta) {}

  void update(double alpha) {
    if (std::isnan(alpha)) alpha = 0.0;
    const double prop = 1.0 / (m_ + t0_);
    h_bar_ = (1.0 - prop) * h_bar_ + prop * (delta_ - alpha);
    log_epsilon_ = mu_ - std::sqrt(m_) / gamma_ * h_bar_;
    const double prop2 = std::pow(m_, -kappa_);
    log_epsilon_bar_ = prop2 * log_epsilon_ + (1.0 - prop2) * log_epsilon_bar_;
    m_ += 1.0;
  }

  double current() const { return std::exp(log_epsilon_); }
  double averaged() const { return std::exp(log_epsilon_bar_); }

 private:
  double log_epsilon_;
  double log_epsilon_bar_;
  double h_bar_ = 0.0;
  double mu_;
  double m_ = 1.0;
  double delta_;
  static constexpr double gamma_ = 0.05;
  static constexpr double t0_ = 10.0;
  static constexpr double kappa_ = 0.75;
};

struct Welford {
  std::vector<double> mean, m2;
  long count = 0;

  explicit Welford(std::size_t dim) : mean(dim, 0.0), m2(dim, 0.0) {}

  void add(std::span<const double> x) {
    ++count;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double d = x[k] - mean[k];
      mean[k] += d / static_cast<double>(count);
      m2[k] += d * (x[k] - mean[k]);
    }
  }

  // Regularized variance estimate, shrunk slightly toward a small constant.
  std::vector<double> regularized_variance() const {
    std::vector<double> var(mean.size(), 1.0);
    if (count < 2) return var;
    const double n = static_cast<double>(count);
    for (std::size_t k = 0; k < var.size(); ++k)
      var[k] = (n / (n + 5.0)) * (m2[k] / (n - 1.0)) + 1e-3 * (5.0 / (n + 5.0));
    return var;
  }
};

// Adaptation schedule: step-size-only initial buffer, doubling metric
// windows, step-size-only terminal buffer. Short warmups adapt step size
// only.
struct WarmupSchedule {
  int init_buffer = 0;
  std::vector<int> window_ends;
};

inline WarmupSchedule warmup_schedule(int warmup) {
  WarmupSchedule sched;
  if (warmup < 20) return sched;
  int init_buffer = 75;
  int term_buffer = 50;
  int base_window = 25;
  if (init_buffer + term_buffer + base_window > warmup) {
    init_buffer = static_cast<int>(0.15 * warmup);
    term_buffer = static_cast<int>(0.10 * warmup);
    base_window = warmup - init_buffer - term_buffer;
  }
  sched.init_buffer = init_buffer;
  const int last = warmup - term_buffer;
  int pos = init_buffer;
  int w = base_window;
  for (;;) {
    const int end = pos + w;
    if (end >= last || end + 2 * w > last) {
      sched.window_ends.push_back(last);
      break;
    }
    sched.window_ends.push_back(end);
    pos = end;
    w *= 2;
  }
  return sched;
}

class NutsChain {
 public:
  NutsChain(const LogDensity& target, const SamplerConfig& cfg, int chain_id)
      : target_(target),
        cfg_(cfg),
        rng_(cfg.seed, static_cast<std::uint64_t>(chain_id)),
        dim_(target.dim()),
        inv_mass_(dim_, 1.0) {}

  // Runs the chain and writes post-warmup reported draws into `draws`
  // (row-major output_dim blocks) and flags into `divergent`.
  ChainDiagnostics run(std::span<const double> init, double* draws, std::uint8_t* divergent) {
    initialize(init);
    const int warmup = cfg_.resolved_warmup();
    const WarmupSchedule sched = warmup_schedule(warmup);
    std::size_t window_idx = 0;
    step_size_ = find_initial_step_size();
    DualAverage da(step_size_, cfg_.target_accept);
    Welford welford(dim_);

    ChainDiagnostics diag;
    std::vector<double> out_row(target_.output_dim());
    double accept_total = 0.0;
    const int kept = cfg_.iterations - warmup;
    for (int m = 0; m < cfg_.iterations; ++m) {
      const Transition tr = transition();
      if (m < warmup) {
        da.update(tr.accept_stat);
        step_size_ = da.current();
        const bool in_windows = window_idx < sched.window_ends.size() && m >= sched.init_buffer;
        if (in_windows) welford.add(q_);
        // One restart once the initial buffer has found the right scale;
        // the early far-from-target acceptance values would otherwise bias
        // the averaged step size for the rest of the warmup.
        if (m + 1 == sched.init_buffer) da = DualAverage(step_size_, cfg_.target_accept);
        if (in_windows && m + 1 == sched.window_ends[window_idx]) {
          inv_mass_ = welford.regularized_variance();
          welford = Welford(dim_);
          ++window_idx;
        }
        if (m + 1 == warmup) step_size_ = da.averaged();
      } else {
        const int d = m - warmup;
        target_.outputs(q_, out_row);
        std::copy(out_row.begin(), out_row.end(),
                  draws + static_cast<std::size_t>(d) * out_row.size());
        divergent[d] = tr.divergent ? 1 : 0;
        if (tr.divergent) ++diag.divergences;
        if (tr.max_depth_hit) ++diag.max_depth_hits;
        accept_total += tr.accept_stat;
      }
    }
    diag.step_size = step_size_;
    diag.mean_accept = kept > 0 ? accept_total / kept : 0.0;
    return diag;
  }

 private:
  struct Transition {
    double accept_stat = 0.0;
    bool divergent = false;
    bool max_depth_hit = false;
  };

  struct Point {
    std::vector<double> q, r, g;
    double logp = 0.0;
  };

  struct Tree {
    Point rear;   // end nearest the trajectory start
    Point front;  // end farthest in the travel direction
    std::vector<double> rho;
    std::vector<double> q_prop, g_prop;
    double logp_prop = 0.0;
    double log_w = kNegInf;
    double sum_accept = 0.0;
    int n_leaves = 0;
    bool valid = false;
    bool divergent = false;
  };

  void initialize(std::span<const double> init) {
    q_.assign(dim_, 0.0);
    g_.assign(dim_, 0.0);
    if (!init.empty()) {
      if (init.size() != dim_) throw ValidationError("init vector has wrong dimension");
      std::copy(init.begin(), init.end(), q_.begin());
      logp_ = target_.log_prob_grad(q_, g_);
      if (!std::isfinite(logp_))
        throw std::runtime_error("provided initial point has non-finite log density");
      return;
    }
    for (int attempt = 0; attempt < 100; ++attempt) {
      for (auto& v : q_) v = rng_.uniform(-2.0, 2.0);
      logp_ = target_.log_prob_grad(q_, g_);
      if (std::isfinite(logp_)) return;
    }
    throw std::runtime_error("failed to find a finite initialization in 100 attempts");
  }

  double kinetic(std::span<const double> r) const {
    double k = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) k += r[i] * r[i] * inv_mass_[i];
    return 0.5 * k;
  }

  void sample_momentum(std::vector<double>& r) {
    r.resize(dim_);
    for (std::size_t i = 0; i < dim_; ++i) r[i] = rng_.normal() / std::sqrt(inv_mass_[i]);
  }

  // One leapfrog step of signed size eps, in place.
  void leapfrog(Point& p, double eps) const {
    for (std::size_t i = 0; i < dim_; ++i) p.r[i] += 0.5 * eps * p.g[i];
    for (std::size_t i = 0; i < dim_; ++i) p.q[i] += eps * inv_mass_[i] * p.r[i];
    p.logp = target_.log_prob_grad(p.q, p.g);
    for (std::size_t i = 0; i < dim_; ++i) p.r[i] += 0.5 * eps * p.g[i];
  }

  // Crude bracketing search for a step size whose one-step acceptance
  // probability straddles 1/2 (Hoffman & Gelman 2014, Algorithm 4).
  double find_initial_step_size() {
    double eps = 1.0;
    Point p;
    p.q = q_;
    p.g = g_;
    p.logp = logp_;
    sample_momentum(p.r);
    const double h0 = -p.logp + kinetic(p.r);
    auto log_ratio_at = [&](double step) {
      Point trial = p;
      leapfrog(trial, step);
      const double h = -trial.logp + kinetic(trial.r);
      return std::isfinite(h) ? h0 - h : -std::numeric_limits<double>::infinity();
    };
    double a = log_ratio_at(eps);
    const double log_half = std::log(0.5);
    const double dir = a > log_half ? 1.0 : -1.0;
    for (int iter = 0; iter < 100; ++iter) {
      const double next = eps * std::pow(2.0, dir);
      if (next < 1e-10 || next > 1e7) break;
      a = log_ratio_at(next);
      if (dir > 0 ? a <= log_half : a >= log_half) {
        if (dir < 0) eps = next;  // keep the smaller, acceptable side
        break;
      }
      eps = next;
    }
    return eps;
  }

  double p_sharp_dot(std::span<const double> r_end, std::span<const double> rho) const {
    double s = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) s += inv_mass_[i] * r_end[i] * rho[i];
    return s;
  }

  bool no_u_turn(const Point& rear, const Point& front, std::span<const double> rho) const {
    return p_sharp_dot(rear.r, rho) > 0.0 && p_sharp_dot(front.r, rho) > 0.0;
  }

  Tree build_leaf(const Point& from, double eps, double h0) {
    Tree t;
    Point p = from;
    leapfrog(p, eps);
    const double h = -p.logp + kinetic(p.r);
    const double dh = h0 - h;  // log weight relative to the initial energy
    t.divergent = !std::isfinite(h) || (h - h0 > 1000.0);
    t.log_w = t.divergent ? kNegInf : dh;
    t.sum_accept = std::isfinite(dh) ? std::min(1.0, std::exp(dh)) : 0.0;
    t.n_leaves = 1;
    t.q_prop = p.q;
    t.g_prop = p.g;
    t.logp_prop = p.logp;
    t.rho = p.r;
    t.rear = p;
    t.front = std::move(p);
    t.valid = !t.divergent;
    return t;
  }

  Tree build_tree(int depth, const Point& from, double eps, double h0) {
    if (depth == 0) return build_leaf(from, eps, h0);
    Tree first = build_tree(depth - 1, from, eps, h0);
    if (!first.valid) return first;
    Tree second = build_tree(depth - 1, first.front, eps, h0);
    first.sum_accept += second.sum_accept;
    first.n_leaves += second.n_leaves;
    first.divergent = first.divergent || second.divergent;
    if (!second.valid) {
      first.valid = false;
      return first;
    }
    // multinomial draw between the two halves, unbiased within the subtree
    const double combined = log_sum_exp(first.log_w, second.log_w);
    if (std::log(rng_.uniform_pos()) < second.log_w - combined) {
      first.q_prop = std::move(second.q_prop);
      first.g_prop = std::move(second.g_prop);
      first.logp_prop = second.logp_prop;
    }
    first.log_w = combined;
    for (std::size_t i = 0; i < dim_; ++i) first.rho[i] += second.rho[i];
    first.front = std::move(second.front);
    first.valid = no_u_turn(first.rear, first.front, first.rho);
    return first;
  }

  Transition transition() {
    Transition tr;
    Point init;
    init.q = q_;
    init.g = g_;
    init.logp = logp_;
    sample_momentum(init.r);
    const double h0 = -init.logp + kinetic(init.r);

    Point rear = init;   // backward-most point
    Point front = init;  // forward-most point
    std::vector<double> rho = init.r;
    std::vector<double> q_prop = q_;
    std::vector<double> g_prop = g_;
    double logp_prop = logp_;
    double log_w = 0.0;
    double sum_accept = 0.0;
    int n_leaves = 0;

    int depth = 0;
    for (; depth < cfg_.max_tree_depth; ++depth) {
      const bool forward = (rng_.next() & 1u) != 0;
      const double eps = forward ? step_size_ : -step_size_;
      Tree subtree = build_tree(depth, forward ? front : rear, eps, h0);
      sum_accept += subtree.sum_accept;
      n_leaves += subtree.n_leaves;
      tr.divergent = tr.divergent || subtree.divergent;
      if (!subtree.valid) break;
      if (forward)
        front = std::move(subtree.front);
      else
        rear = std::move(subtree.front);
      // biased progressive sampling toward the new half of the trajectory
      if (std::log(rng_.uniform_pos()) < subtree.log_w - log_w) {
        q_prop = std::move(subtree.q_prop);
        g_prop = std::move(subtree.g_prop);
        logp_prop = subtree.logp_prop;
      }
      log_w = log_sum_exp(log_w, subtree.log_w);
      for (std::size_t i = 0; i < dim_; ++i) rho[i] += subtree.rho[i];
      if (!no_u_turn(rear, front, rho)) {
        ++depth;
        break;
      }
    }
    tr.max_depth_hit = depth >= cfg_.max_tree_depth;
    tr.accept_stat = n_leaves > 0 ? sum_accept / n_leaves : 0.0;
    q_ = std::move(q_prop);
    g_ = std::move(g_prop);
    logp_ = logp_prop;
    return tr;
  }

  const LogDensity& target_;
  const SamplerConfig& cfg_;
  Rng rng_;
  std::size_t dim_;
  std::vector<double> inv_mass_;
  std::vector<double> q_, g_;
  double logp_ = 0.0;
  double step_size_ = 1.0;
};

}  // namespace detail

// Multi-chain no-U-turn sampling. Chains use independent random streams
// derived from the seed, so results are identical for a given
// (seed, config, data) regardless of the thread count.
inline SampleResult sample(const LogDensity& target, const SamplerConfig& cfg,
                           std::span<const double> init = {}) {
  cfg.validate();
  SampleResult result;
  DrawsMatrix& d = result.draws;
  d.n_chains = cfg.chains;
  d.n_draws = cfg.iterations - cfg.resolved_warmup();
  d.n_cols = static_cast<int>(target.output_dim());
  d.names = target.output_names();
  d.data.assign(static_cast<std::size_t>(d.n_chains) * d.n_draws * d.n_cols, 0.0);
  d.divergent.assign(static_cast<std::size_t>(d.n_chains) * d.n_draws, 0);
  result.chain_diag.resize(static_cast<std::size_t>(cfg.chains));
  parallel_for(static_cast<std::size_t>(cfg.chains), cfg.threads, [&](std::size_t c) {
    detail::NutsChain chain(target, cfg, static_cast<int>(c));
    result.chain_diag[c] = chain.run(
        init, d.row(static_cast<int>(c), 0),
        &d.divergent[c * static_cast<std::size_t>(d.n_draws)]);
  });
  const int total = d.total_draws();
  if (total > 0) {
    const double rate = static_cast<double>(result.total_divergences()) / total;
    if (rate > 0.2)
      warn("post-warmup divergence rate " + std::to_string(rate) +
           " exceeds 20%; results are unreliable");
  }
  return result;
}

// ---------------------------------------------------------------------------
// Convergence diagnostics
// ---------------------------------------------------------------------------

// Split-chain potential scale reduction factor.
inline double rhat(const DrawsMatrix& draws, int col) {
  if (draws.n_chains < 2) throw std::invalid_argument("rhat needs at least 2 chains");
  if (draws.n_draws < 4) throw std::invalid_argument("rhat needs at least 4 draws per chain");
  const int half = draws.n_draws / 2;
  std::vector<std::vector<double>> seqs;
  for (int c = 0; c < draws.n_chains; ++c) {
    std::vector<double> full = draws.chain_column(c, col);
    seqs.emplace_back(full.begin(), full.begin() + half);
    seqs.emplace_back(full.end() - half, full.end());
  }
  const double m = static_cast<double>(seqs.size());
  const double len = static_cast<double>(half);
  std::vector<double> means;
  double w = 0.0;
  for (const auto& s : seqs) {
    means.push_back(mean(s));
    w += sample_variance(s);
  }
  w /= m;
  const double b_over_n = sample_variance(means);
  if (w == 0.0) return b_over_n == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double var_plus = (len - 1.0) / len * w + b_over_n;
  return std::sqrt(var_plus / w);
}

// Effective sample size via pairwise autocorrelation truncation (Geyer's
// initial monotone positive sequence, multi-chain form).
inline double ess(const DrawsMatrix& draws, int col) {
  if (draws.n_draws < 4) throw std::invalid_argument("ess needs at least 4 draws per chain");
  const int C = draws.n_chains;
  const int N = draws.n_draws;
  std::vector<std::vector<double>> chains;
  std::vector<double> chain_means, chain_vars;
  for (int c = 0; c < C; ++c) {
    chains.push_back(draws.chain_column(c, col));
    chain_means.push_back(mean(chains.back()));
    chain_vars.push_back(sample_variance(chains.back()));
  }
  const double mean_var = mean(chain_vars);
  double var_plus = mean_var * (N - 1.0) / N;
  if (C > 1) var_plus += sample_variance(chain_means);
  if (var_plus == 0.0 || !std::isfinite(var_plus)) return 0.0;

  // biased (divisor N) autocovariance at the given lag, averaged over chains
  auto mean_acov = [&](int lag) {
    double acc = 0.0;
    for (int c = 0; c < C; ++c) {
      const auto& x = chains[static_cast<std::size_t>(c)];
      double s = 0.0;
      for (int i = 0; i + lag < N; ++i)
        s += (x[static_cast<std::size_t>(i)] - chain_means[static_cast<std::size_t>(c)]) *
             (x[static_cast<std::size_t>(i + lag)] - chain_means[static_cast<std::size_t>(c)]);
      acc += s / N;
    }
    return acc / C;
  };

  auto rho = [&](int lag) { return 1.0 - (mean_var - mean_acov(lag)) / var_plus; };

  double tau = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (int k = 0; 2 * k + 1 < N; ++k) {
    const double r_even = k == 0 ? 1.0 : rho(2 * k);
    const double r_odd = rho(2 * k + 1);
    double pair = r_even + r_odd;
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  tau -= 1.0;
  if (tau <= 0.0) return 0.0;
  return static_cast<double>(C) * N / tau;
}

struct SummaryRow {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  double rhat = std::numeric_limits<double>::quiet_NaN();
  double ess = std::numeric_limits<double>::quiet_NaN();
};

inline std::vector<SummaryRow> summarize(const DrawsMatrix& draws) {
  if (draws.total_draws() == 0) throw std::invalid_argument("summarize: no draws");
  std::vector<SummaryRow> rows;
  for (int col = 0; col < draws.n_cols; ++col) {
    SummaryRow row;
    row.name = draws.names[static_cast<std::size_t>(col)];
    std::vector<double> merged = draws.column(col);
    row.mean = mean(merged);
    row.sd = sample_sd(merged);
    std::sort(merged.begin(), merged.end());
    row.q025 = quantile_sorted(merged, 0.025);
    row.q50 = quantile_sorted(merged, 0.5);
    row.q975 = quantile_sorted(merged, 0.975);
    if (draws.n_chains >= 2 && draws.n_draws >= 4) row.rhat = rhat(draws, col);
    if (draws.n_draws >= 4) row.ess = ess(draws, col);
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV persistence
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_draws_csv(const DrawsMatrix& draws, const std::filesystem::path& path,
                            const std::vector<std::string>& provenance = {}) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  for (const auto& line : provenance) out << "# " << line << '\n';
  out << "chain,iter";
  for (const auto& name : draws.names) out << ',' << csv_field(name);
  out << '\n';
  for (int c = 0; c < draws.n_chains; ++c)
    for (int d = 0; d < draws.n_draws; ++d) {
      out << (c + 1) << ',' << (d + 1);
      for (int col = 0; col < draws.n_cols; ++col)
        out << ',' << format_double(draws.at(c, d, col));
      out << '\n';
    }
}

inline DrawsMatrix read_draws_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read file: " + path.string());
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    header = split_csv(line);
    break;
  }
  if (header.size() < 3 || header[0] != "chain" || header[1] != "iter")
    throw ValidationError("draws file must start with chain,iter columns: " + path.string());
  DrawsMatrix d;
  d.names.assign(header.begin() + 2, header.end());
  d.n_cols = static_cast<int>(d.names.size());
  std::vector<std::vector<double>> rows;
  std::vector<int> chain_ids;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const std::vector<std::string> fields = split_csv(line);
    if (fields.size() != header.size())
      throw ValidationError("malformed draws row in " + path.string());
    chain_ids.push_back(std::stoi(fields[0]));
    std::vector<double> row;
    for (std::size_t f = 2; f < fields.size(); ++f) row.push_back(std::stod(fields[f]));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError("draws file has no rows: " + path.string());
  d.n_chains = *std::max_element(chain_ids.begin(), chain_ids.end());
  if (static_cast<int>(rows.size()) % d.n_chains != 0)
    throw ValidationError("draws file has unequal chain lengths: " + path.string());
  d.n_draws = static_cast<int>(rows.size()) / d.n_chains;
  d.data.assign(rows.size() * static_cast<std::size_t>(d.n_cols), 0.0);
  d.divergent.assign(rows.size(), 0);
  std::vector<int> seen(static_cast<std::size_t>(d.n_chains), 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int c = chain_ids[r] - 1;
    if (c < 0 || c >= d.n_chains || seen[static_cast<std::size_t>(c)] >= d.n_draws)
      throw ValidationError("inconsistent chain ids in " + path.string());
    std::copy(rows[r].begin(), rows[r].end(), d.row(c, seen[static_cast<std::size_t>(c)]++));
  }
  return d;
}

}  // namespace mp2
