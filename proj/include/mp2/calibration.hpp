#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mp2/model.hpp"
#include "mp2/posterior.hpp"
#include "mp2/sampler.hpp"
#include "mp2/simulate.hpp"

namespace mp2 {

// Reported parameters monitored by the calibration machinery: the model
// parameters (fixed effects, scales, correlations). The per-actor effects
// C[i][k] can be included on request.
inline std::vector<int> monitored_indices(const ModelContext& ctx, bool include_actor_effects) {
  const std::vector<std::string> names = report_names(ctx);
  std::vector<int> idx;
  for (std::size_t c = 0; c < names.size(); ++c)
    if (include_actor_effects || names[c].rfind("C[", 0) != 0) idx.push_back(static_cast<int>(c));
  return idx;
}

// Merged post-warmup draws of the monitored parameters from one fit.
struct FitDraws {
  bool converged = true;
  std::vector<std::vector<double>> draws;  // [monitored param][draw]
};

using FitFunction = std::function<FitDraws(const MultiplexNetwork&, std::uint64_t)>;

// Fit with the library sampler; convergence gate: split R-hat below the
// threshold on every monitored column.
inline FitFunction default_fit_function(const ModelContext& ctx, const SamplerConfig& base,
                                        double rhat_threshold,
                                        const std::vector<int>& monitored) {
  return [&ctx, base, rhat_threshold, monitored](const MultiplexNetwork& net,
                                                 std::uint64_t seed) {
    SamplerConfig cfg = base;
    cfg.seed = seed;
    cfg.threads = 1;
    Posterior post(ctx, net);
    const SampleResult res = sample(post, cfg);
    FitDraws out;
    if (cfg.chains >= 2 && res.draws.n_draws >= 4)
      for (int col : monitored)
        if (!(rhat(res.draws, col) < rhat_threshold)) {
          out.converged = false;
          break;
        }
    out.draws.reserve(monitored.size());
    for (int col : monitored) out.draws.push_back(res.draws.column(col));
    return out;
  };
}

namespace detail {

struct Checkpoint {
  std::map<int, std::vector<double>> first;   // rep -> per-parameter first value
  std::map<int, std::vector<double>> second;  // rep -> per-parameter second value (optional)
  std::vector<int> excluded;
};

// Checkpoint CSV: replication,status followed by per-parameter value rows.
// Values are keyed by parameter order, one file per run directory.
inline Checkpoint read_checkpoint(const std::filesystem::path& dir, const std::string& kind,
                                  std::size_t n_params, bool two_values) {
  Checkpoint cp;
  std::ifstream in(dir / (kind + "_checkpoint.csv"));
  if (!in) return cp;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const std::vector<std::string> fields = split_csv(line);
    if (fields.size() < 2) continue;
    const int rep = std::stoi(fields[0]);
    if (fields[1] == "excluded") {
      cp.excluded.push_back(rep);
      continue;
    }
    const std::size_t expected = 2 + n_params * (two_values ? 2 : 1);
    if (fields[1] != "ok" || fields.size() != expected) continue;
    std::vector<double> v1(n_params), v2(n_params);
    for (std::size_t p = 0; p < n_params; ++p) {
      v1[p] = std::stod(fields[2 + p]);
      if (two_values) v2[p] = std::stod(fields[2 + n_params + p]);
    }
    cp.first[rep] = std::move(v1);
    if (two_values) cp.second[rep] = std::move(v2);
  }
  return cp;
}

inline void append_checkpoint_row(std::ofstream& out, std::mutex& mutex, int rep, bool ok,
                                  std::span<const double> v1, std::span<const double> v2) {
  if (!out.is_open()) return;
  std::lock_guard<std::mutex> lock(mutex);
  out << rep << ',' << (ok ? "ok" : "excluded");
  if (ok) {
    for (double v : v1) out << ',' << format_double(v);
    for (double v : v2) out << ',' << format_double(v);
  }
  out << '\n';
  out.flush();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Simulation-based calibration
// ---------------------------------------------------------------------------

struct SbcOptions {
  int L = 1000;
  int K = 100;
  double rhat_threshold = 1.05;
  SamplerConfig sampler{.chains = 2, .iterations = 1000, .warmup = 500};
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::filesystem::path checkpoint_dir;  // empty: no checkpointing
  bool include_actor_effects = false;
};

struct SbcResult {
  std::vector<std::string> parameters;
  std::vector<int> replications;        // completed replication ids, ascending
  std::vector<std::vector<int>> ranks;  // [param][completed replication]
  std::vector<int> excluded;            // replication ids dropped by the convergence gate
  int K = 0;
  int L = 0;
};

// For each replication: draw parameters from the prior, simulate a network,
// fit it, thin the posterior to K draws, and record the rank of the true
// value among them (count of posterior draws strictly below, ties broken
// uniformly at random). Non-converged fits are excluded and counted.
inline SbcResult sbc_run(const ModelContext& ctx, const SbcOptions& opt, FitFunction fit = {}) {
  const std::vector<int> monitored = monitored_indices(ctx, opt.include_actor_effects);
  const std::vector<std::string> all_names = report_names(ctx);
  SbcResult result;
  result.K = opt.K;
  result.L = opt.L;
  for (int c : monitored) result.parameters.push_back(all_names[static_cast<std::size_t>(c)]);
  if (!fit)
    fit = default_fit_function(ctx, opt.sampler, opt.rhat_threshold, monitored);
  const int merged = opt.sampler.chains * (opt.sampler.iterations - opt.sampler.resolved_warmup());
  if (opt.K > merged)
    throw ValidationError("K exceeds the post-warmup draw count available for thinning");

  detail::Checkpoint done;
  std::ofstream cp_out;
  std::mutex cp_mutex;
  if (!opt.checkpoint_dir.empty()) {
    std::filesystem::create_directories(opt.checkpoint_dir);
    done = detail::read_checkpoint(opt.checkpoint_dir, "sbc", monitored.size(), false);
    cp_out.open(opt.checkpoint_dir / "sbc_checkpoint.csv", std::ios::app);
  }

  std::vector<std::optional<std::vector<int>>> rep_ranks(static_cast<std::size_t>(opt.L));
  std::vector<std::uint8_t> rep_excluded(static_cast<std::size_t>(opt.L), 0);
  for (const auto& [rep, values] : done.first) {
    if (rep < 0 || rep >= opt.L) continue;
    std::vector<int> r(values.size());
    for (std::size_t p = 0; p < values.size(); ++p) r[p] = static_cast<int>(values[p]);
    rep_ranks[static_cast<std::size_t>(rep)] = std::move(r);
  }
  for (int rep : done.excluded)
    if (rep >= 0 && rep < opt.L) rep_excluded[static_cast<std::size_t>(rep)] = 1;

  parallel_for(static_cast<std::size_t>(opt.L), opt.threads, [&](std::size_t rep) {
    if (rep_ranks[rep] || rep_excluded[rep]) return;  // resumed from checkpoint
    const std::uint64_t rep_seed = sub_seed(opt.seed, rep);
    Rng rng(rep_seed);
    const ParameterState truth_state = draw_prior(ctx, rng);
    const MultiplexNetwork net = simulate_network(ctx, truth_state, rng);
    std::vector<double> truth_report(static_cast<std::size_t>(report_dim(ctx)));
    report_state(ctx, truth_state, truth_report);
    const FitDraws fd = fit(net, sub_seed(rep_seed, 1));
    if (!fd.converged) {
      rep_excluded[rep] = 1;
      detail::append_checkpoint_row(cp_out, cp_mutex, static_cast<int>(rep), false, {}, {});
      return;
    }
    std::vector<int> ranks(monitored.size());
    std::vector<double> ranks_d(monitored.size());
    const std::vector<int> keep = thin_indices(static_cast<int>(fd.draws[0].size()), opt.K);
    for (std::size_t p = 0; p < monitored.size(); ++p) {
      const double truth = truth_report[static_cast<std::size_t>(monitored[p])];
      int less = 0, equal = 0;
      for (int d : keep) {
        const double v = fd.draws[p][static_cast<std::size_t>(d)];
        less += v < truth;
        equal += v == truth;
      }
      int rank = less;
      if (equal > 0) rank += static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(equal) + 1));
      ranks[p] = rank;
      ranks_d[p] = rank;
    }
    detail::append_checkpoint_row(cp_out, cp_mutex, static_cast<int>(rep), true, ranks_d, {});
    rep_ranks[rep] = std::move(ranks);
  });

  result.ranks.assign(monitored.size(), {});
  for (int rep = 0; rep < opt.L; ++rep) {
    if (rep_excluded[static_cast<std::size_t>(rep)]) {
      result.excluded.push_back(rep);
      continue;
    }
    if (!rep_ranks[static_cast<std::size_t>(rep)]) continue;
    result.replications.push_back(rep);
    const auto& r = *rep_ranks[static_cast<std::size_t>(rep)];
    for (std::size_t p = 0; p < monitored.size(); ++p) result.ranks[p].push_back(r[p]);
  }
  return result;
}

// Chi-square goodness-of-fit p-value of ranks in [0, K] against the discrete
// uniform; bins of near-equal width when bins does not divide K + 1.
inline double chi_square_uniformity(std::span<const int> ranks, int K, int bins) {
  if (bins < 2) throw std::invalid_argument("uniformity check needs at least 2 bins");
  std::vector<int> width(static_cast<std::size_t>(bins), 0);
  for (int r = 0; r <= K; ++r)
    ++width[static_cast<std::size_t>(static_cast<long>(r) * bins / (K + 1))];
  std::vector<double> expected(static_cast<std::size_t>(bins));
  for (int b = 0; b < bins; ++b) {
    expected[static_cast<std::size_t>(b)] =
        static_cast<double>(ranks.size()) * width[static_cast<std::size_t>(b)] / (K + 1);
    if (expected[static_cast<std::size_t>(b)] < 5.0)
      throw std::invalid_argument(
          "too few replications for the requested bin count (expected < 5 per bin)");
  }
  std::vector<int> observed(static_cast<std::size_t>(bins), 0);
  for (int r : ranks) {
    if (r < 0 || r > K) throw std::invalid_argument("rank outside [0, K]");
    ++observed[static_cast<std::size_t>(static_cast<long>(r) * bins / (K + 1))];
  }
  double chi2 = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double diff = observed[static_cast<std::size_t>(b)] - expected[static_cast<std::size_t>(b)];
    chi2 += diff * diff / expected[static_cast<std::size_t>(b)];
  }
  return chi_square_sf(chi2, bins - 1);
}

inline std::vector<double> uniformity_check(const SbcResult& result, int bins = 20) {
  std::vector<double> p;
  p.reserve(result.parameters.size());
  for (const auto& ranks : result.ranks) p.push_back(chi_square_uniformity(ranks, result.K, bins));
  return p;
}

// ---------------------------------------------------------------------------
// Model sensitivity: posterior z-scores and contraction
// ---------------------------------------------------------------------------

struct SensitivityOptions {
  int L = 100;
  double rhat_threshold = 1.05;
  SamplerConfig sampler{.chains = 2, .iterations = 1000, .warmup = 500};
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::filesystem::path checkpoint_dir;
  bool include_actor_effects = false;
  int prior_var_draws = 100000;  // Monte Carlo size for non-Normal prior variances
};

struct SensitivityResult {
  std::vector<std::string> parameters;
  std::vector<double> prior_variance;       // per parameter
  std::vector<int> replications;
  std::vector<std::vector<double>> z;       // [param][completed]
  std::vector<std::vector<double>> contraction;  // [param][completed]
  std::vector<int> excluded;
  int L = 0;
};

// Prior variances: exact for the Normal fixed effects, Monte Carlo for the
// scale and correlation parameters (and latent actor effects if included).
inline std::vector<double> prior_variances(const ModelContext& ctx,
                                           const std::vector<int>& monitored, int mc_draws,
                                           std::uint64_t seed) {
  const int n_fixed = ctx.n_fixed();
  const int K = ctx.K();
  const PriorConfig& prior = ctx.prior();
  Rng rng(seed);
  std::vector<double> sigma_draws, omega_draws;
  std::vector<double> c_draws;  // one representative latent effect sigma_1 (chol z)_1
  sigma_draws.reserve(static_cast<std::size_t>(mc_draws));
  omega_draws.reserve(static_cast<std::size_t>(mc_draws));
  bool need_c = false;
  const int pair_count = K * (K - 1) / 2;
  for (int idx : monitored)
    if (idx >= n_fixed + K + pair_count) need_c = true;
  for (int d = 0; d < mc_draws; ++d) {
    sigma_draws.push_back(rng.inv_gamma(prior.sigma_shape, prior.sigma_scale));
    const double b0 = prior.lkj_eta + 0.5 * (K - 2);
    omega_draws.push_back(2.0 * rng.beta(b0, b0) - 1.0);  // entry (2,1): pc in column 0 directly
    if (need_c) c_draws.push_back(sigma_draws.back() * rng.normal());
  }
  const double var_sigma = sample_variance(sigma_draws);
  const double var_omega = sample_variance(omega_draws);
  const double var_c = need_c ? sample_variance(c_draws) : 0.0;
  std::vector<double> out;
  out.reserve(monitored.size());
  for (int idx : monitored) {
    if (idx < n_fixed) {
      const double sd = ctx.fixed_prior_sd()[static_cast<std::size_t>(idx)];
      out.push_back(sd * sd);
    } else if (idx < n_fixed + K) {
      out.push_back(var_sigma);
    } else if (idx < n_fixed + K + pair_count) {
      out.push_back(var_omega);
    } else {
      out.push_back(var_c);
    }
  }
  return out;
}

inline SensitivityResult sensitivity_run(const ModelContext& ctx, const SensitivityOptions& opt,
                                         FitFunction fit = {}) {
  const std::vector<int> monitored = monitored_indices(ctx, opt.include_actor_effects);
  const std::vector<std::string> all_names = report_names(ctx);
  SensitivityResult result;
  result.L = opt.L;
  for (int c : monitored) result.parameters.push_back(all_names[static_cast<std::size_t>(c)]);
  result.prior_variance =
      prior_variances(ctx, monitored, opt.prior_var_draws, sub_seed(opt.seed, 0x9e3779b9));
  if (!fit)
    fit = default_fit_function(ctx, opt.sampler, opt.rhat_threshold, monitored);

  detail::Checkpoint done;
  std::ofstream cp_out;
  std::mutex cp_mutex;
  if (!opt.checkpoint_dir.empty()) {
    std::filesystem::create_directories(opt.checkpoint_dir);
    done = detail::read_checkpoint(opt.checkpoint_dir, "sensitivity", monitored.size(), true);
    cp_out.open(opt.checkpoint_dir / "sensitivity_checkpoint.csv", std::ios::app);
  }

  struct Rep {
    std::vector<double> z, s;
  };
  std::vector<std::optional<Rep>> reps(static_cast<std::size_t>(opt.L));
  std::vector<std::uint8_t> rep_excluded(static_cast<std::size_t>(opt.L), 0);
  for (const auto& [rep, values] : done.first)
    if (rep >= 0 && rep < opt.L) reps[static_cast<std::size_t>(rep)] = Rep{values, done.second[rep]};
  for (int rep : done.excluded)
    if (rep >= 0 && rep < opt.L) rep_excluded[static_cast<std::size_t>(rep)] = 1;

  parallel_for(static_cast<std::size_t>(opt.L), opt.threads, [&](std::size_t rep) {
    if (reps[rep] || rep_excluded[rep]) return;
    const std::uint64_t rep_seed = sub_seed(opt.seed, rep);
    Rng rng(rep_seed);
    const ParameterState truth_state = draw_prior(ctx, rng);
    const MultiplexNetwork net = simulate_network(ctx, truth_state, rng);
    std::vector<double> truth_report(static_cast<std::size_t>(report_dim(ctx)));
    report_state(ctx, truth_state, truth_report);
    const FitDraws fd = fit(net, sub_seed(rep_seed, 1));
    if (!fd.converged) {
      rep_excluded[rep] = 1;
      detail::append_checkpoint_row(cp_out, cp_mutex, static_cast<int>(rep), false, {}, {});
      return;
    }
    Rep r;
    for (std::size_t p = 0; p < monitored.size(); ++p) {
      const double truth = truth_report[static_cast<std::size_t>(monitored[p])];
      const double post_mean = mean(fd.draws[p]);
      const double post_var = sample_variance(fd.draws[p]);
      const double post_sd = std::sqrt(post_var);
      r.z.push_back(post_sd > 0.0 ? (post_mean - truth) / post_sd
                                  : std::numeric_limits<double>::quiet_NaN());
      r.s.push_back((result.prior_variance[p] - post_var) / result.prior_variance[p]);
    }
    detail::append_checkpoint_row(cp_out, cp_mutex, static_cast<int>(rep), true, r.z, r.s);
    reps[rep] = std::move(r);
  });

  result.z.assign(monitored.size(), {});
  result.contraction.assign(monitored.size(), {});
  for (int rep = 0; rep < opt.L; ++rep) {
    if (rep_excluded[static_cast<std::size_t>(rep)]) {
      result.excluded.push_back(rep);
      continue;
    }
    if (!reps[static_cast<std::size_t>(rep)]) continue;
    result.replications.push_back(rep);
    for (std::size_t p = 0; p < monitored.size(); ++p) {
      result.z[p].push_back(reps[static_cast<std::size_t>(rep)]->z[p]);
      result.contraction[p].push_back(reps[static_cast<std::size_t>(rep)]->s[p]);
    }
  }
  return result;
}

}  // namespace mp2
