#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mp2/math.hpp"
#include "mp2/network.hpp"

namespace mp2 {

struct PriorConfig {
  double baseline_sd = 10.0;            // Normal(0, sd) on every baseline effect
  double coeff_scale_numerator = 10.0;  // Normal(0, numerator / sd(covariate)) on coefficients
  double sigma_shape = 3.0;             // InverseGamma(shape, scale) on actor-effect scales
  double sigma_scale = 50.0;
  double lkj_eta = 2.0;                 // LKJ concentration on the actor-effect correlation

  void validate() const {
    if (baseline_sd <= 0 || coeff_scale_numerator <= 0 || sigma_shape <= 0 ||
        sigma_scale <= 0 || lkj_eta <= 0)
      throw ValidationError("prior hyperparameters must be strictly positive");
  }
};

// Which covariates feed which effect family, per layer (within-layer and
// actor families) or per layer pair (cross-layer families).
struct ModelSpec {
  std::vector<std::string> layers;
  std::vector<std::vector<std::string>> density_covs;        // [T] dyadic
  std::vector<std::vector<std::string>> reciprocity_covs;    // [T] dyadic
  std::vector<std::vector<std::string>> cross_density_covs;  // [P] dyadic
  std::vector<std::vector<std::string>> cross_recip_covs;    // [P] dyadic
  std::vector<std::vector<std::string>> sender_covs;         // [T] actor
  std::vector<std::vector<std::string>> receiver_covs;       // [T] actor
  PriorConfig prior;

  int T() const { return static_cast<int>(layers.size()); }
  int pairs() const { return T() * (T() - 1) / 2; }

  static ModelSpec plain(std::vector<std::string> layer_names) {
    ModelSpec spec;
    spec.layers = std::move(layer_names);
    spec.resize_blocks();
    return spec;
  }

  static ModelSpec plain(int T) {
    std::vector<std::string> names;
    for (int t = 0; t < T; ++t) names.push_back("layer" + std::to_string(t + 1));
    return plain(std::move(names));
  }

  void resize_blocks() {
    density_covs.resize(static_cast<std::size_t>(T()));
    reciprocity_covs.resize(static_cast<std::size_t>(T()));
    cross_density_covs.resize(static_cast<std::size_t>(pairs()));
    cross_recip_covs.resize(static_cast<std::size_t>(pairs()));
    sender_covs.resize(static_cast<std::size_t>(T()));
    receiver_covs.resize(static_cast<std::size_t>(T()));
  }

  int layer_index(const std::string& name) const {
    for (std::size_t t = 0; t < layers.size(); ++t)
      if (layers[t] == name) return static_cast<int>(t);
    return -1;
  }
};

// Lexicographic pair enumeration: (0,1), (0,2), ..., (T-2, T-1).
inline int pair_index(int t, int s, int T) {
  return t * (2 * T - t - 1) / 2 + (s - t - 1);
}

inline std::pair<int, int> pair_layers(int p, int T) {
  for (int t = 0; t < T; ++t)
    for (int s = t + 1; s < T; ++s)
      if (pair_index(t, s, T) == p) return {t, s};
  throw std::out_of_range("pair index out of range");
}

// All model parameters in constrained space. Actor effects are carried in
// non-centered form: C_i = diag(sigma) * chol * z_i, with chol a Cholesky
// factor of the 2T x 2T correlation matrix (unit row norms).
struct ParameterState {
  std::vector<double> mu, rho;              // [T]
  std::vector<double> mu_cross, rho_cross;  // [P]
  std::vector<std::vector<double>> delta_mu, delta_rho;              // [T][...]
  std::vector<std::vector<double>> delta_mu_cross, delta_rho_cross;  // [P][...]
  std::vector<std::vector<double>> gamma_alpha, gamma_beta;          // [T][...]
  std::vector<double> sigma;    // [K], K = 2T, strictly positive
  std::vector<double> chol;     // K*K row-major, lower triangular
  std::vector<double> z_actor;  // n*K row-major

  double chol_at(int r, int c, int K) const {
    return chol[static_cast<std::size_t>(r) * K + c];
  }
};

// Sufficient statistics of a dyad outcome. The joint score is linear in
// these features: directed-tie indicators per layer, within-layer
// reciprocation, and co-occurrence counts per layer pair (same-direction for
// cross-density, opposite-direction for cross-reciprocity).
struct FeatureTable {
  int T = 0;
  int P = 0;
  int F = 0;
  int n_outcomes = 0;
  std::vector<std::int8_t> phi;         // dense [n_outcomes][F]
  std::vector<std::uint32_t> row_begin;  // sparse rows, size n_outcomes + 1
  std::vector<std::uint16_t> feat_idx;
  std::vector<std::int8_t> feat_val;
  std::vector<std::int8_t> digits;       // [n_outcomes][T]: two-bit layer patterns
  std::vector<std::pair<int, int>> pair_list;  // pair p -> (t, s)

  int f_out(int t) const { return t; }
  int f_in(int t) const { return T + t; }
  int f_rec(int t) const { return 2 * T + t; }
  int f_cross_density(int p) const { return 3 * T + p; }
  int f_cross_recip(int p) const { return 3 * T + P + p; }

  std::int8_t value(int outcome, int f) const {
    return phi[static_cast<std::size_t>(outcome) * F + f];
  }

  double score(int outcome, std::span<const double> eta) const {
    double k = 0.0;
    for (std::uint32_t e = row_begin[static_cast<std::size_t>(outcome)];
         e < row_begin[static_cast<std::size_t>(outcome) + 1]; ++e)
      k += static_cast<double>(feat_val[e]) * eta[feat_idx[e]];
    return k;
  }
};

inline FeatureTable build_feature_table(int T) {
  if (T < 1 || T > 8)
    throw ValidationError("layer count must be between 1 and 8 (exact outcome enumeration)");
  FeatureTable ft;
  ft.T = T;
  ft.P = T * (T - 1) / 2;
  ft.F = 3 * T + 2 * ft.P;
  ft.n_outcomes = 1 << (2 * T);
  ft.phi.assign(static_cast<std::size_t>(ft.n_outcomes) * ft.F, 0);
  ft.row_begin.assign(static_cast<std::size_t>(ft.n_outcomes) + 1, 0);
  ft.digits.assign(static_cast<std::size_t>(ft.n_outcomes) * T, 0);
  for (int t = 0; t < T; ++t)
    for (int s = t + 1; s < T; ++s) ft.pair_list.emplace_back(t, s);
  for (int o = 0; o < ft.n_outcomes; ++o) {
    for (int t = 0; t < T; ++t)
      ft.digits[static_cast<std::size_t>(o) * T + t] = static_cast<std::int8_t>((o >> (2 * t)) & 3);
    auto* row = &ft.phi[static_cast<std::size_t>(o) * ft.F];
    for (int t = 0; t < T; ++t) {
      const int out_t = (o >> (2 * t)) & 1;
      const int in_t = (o >> (2 * t + 1)) & 1;
      row[ft.f_out(t)] = static_cast<std::int8_t>(out_t);
      row[ft.f_in(t)] = static_cast<std::int8_t>(in_t);
      row[ft.f_rec(t)] = static_cast<std::int8_t>(out_t & in_t);
      for (int s = t + 1; s < T; ++s) {
        const int out_s = (o >> (2 * s)) & 1;
        const int in_s = (o >> (2 * s + 1)) & 1;
        const int p = pair_index(t, s, T);
        row[ft.f_cross_density(p)] =
            static_cast<std::int8_t>(out_t * out_s + in_t * in_s);
        row[ft.f_cross_recip(p)] =
            static_cast<std::int8_t>(out_t * in_s + in_t * out_s);
      }
    }
    for (int f = 0; f < ft.F; ++f)
      if (row[f] != 0) {
        ft.feat_idx.push_back(static_cast<std::uint16_t>(f));
        ft.feat_val.push_back(row[f]);
      }
    ft.row_begin[static_cast<std::size_t>(o) + 1] =
        static_cast<std::uint32_t>(ft.feat_idx.size());
  }
  return ft;
}

// ---------------------------------------------------------------------------
// Correlation Cholesky utilities
// ---------------------------------------------------------------------------

// Build a unit-row-norm lower Cholesky factor from canonical partial
// correlations pc in (-1, 1), packed row-major over the strict lower
// triangle. Row r: L[r][c] = pc[r][c] * sqrt(1 - sum of squares so far).
inline std::vector<double> chol_from_partial_correlations(std::span<const double> pc, int K) {
  std::vector<double> L(static_cast<std::size_t>(K) * K, 0.0);
  std::size_t idx = 0;
  L[0] = 1.0;
  for (int r = 1; r < K; ++r) {
    double rem = 1.0;  // 1 - sum_{c' < c} L[r][c']^2, kept as a running product
    for (int c = 0; c < r; ++c) {
      const double z = pc[idx++];
      L[static_cast<std::size_t>(r) * K + c] = z * std::sqrt(rem);
      rem *= (1.0 - z * z);
    }
    L[static_cast<std::size_t>(r) * K + r] = std::sqrt(rem);
  }
  return L;
}

inline std::vector<double> partial_correlations_from_chol(std::span<const double> L, int K) {
  std::vector<double> pc;
  pc.reserve(static_cast<std::size_t>(K) * (K - 1) / 2);
  for (int r = 1; r < K; ++r) {
    double rem = 1.0;
    for (int c = 0; c < r; ++c) {
      const double z = L[static_cast<std::size_t>(r) * K + c] / std::sqrt(rem);
      pc.push_back(z);
      rem *= (1.0 - z * z);
    }
  }
  return pc;
}

inline std::vector<double> correlation_from_chol(std::span<const double> L, int K) {
  std::vector<double> omega(static_cast<std::size_t>(K) * K, 0.0);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) {
      double s = 0.0;
      for (int l = 0; l <= std::min(i, j); ++l)
        s += L[static_cast<std::size_t>(i) * K + l] * L[static_cast<std::size_t>(j) * K + l];
      omega[static_cast<std::size_t>(i) * K + j] = s;
    }
  return omega;
}

inline std::vector<double> chol_from_correlation(std::span<const double> omega, int K) {
  std::vector<double> L(static_cast<std::size_t>(K) * K, 0.0);
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = omega[static_cast<std::size_t>(i) * K + j];
      for (int l = 0; l < j; ++l)
        s -= L[static_cast<std::size_t>(i) * K + l] * L[static_cast<std::size_t>(j) * K + l];
      if (i == j) {
        if (s <= 0.0) throw ValidationError("correlation matrix is not positive definite");
        L[static_cast<std::size_t>(i) * K + i] = std::sqrt(s);
      } else {
        L[static_cast<std::size_t>(i) * K + j] = s / L[static_cast<std::size_t>(j) * K + j];
      }
    }
  }
  return L;
}

// Log normalizing constant of the LKJ density expressed on the Cholesky
// factor. Derived from the factorization of the density into independent
// scaled Beta(b_c, b_c) partial correlations per column c, with
// b_c = eta + (K - c - 2) / 2 (Lewandowski, Kurowicka & Joe 2009).
inline double lkj_chol_log_norm(int K, double eta) {
  double lc = 0.0;
  for (int c = 0; c + 1 < K; ++c) {
    const double b = eta + 0.5 * (K - c - 2);
    lc += (K - 1 - c) * (-(2.0 * b - 1.0) * std::log(2.0) - lbeta(b, b));
  }
  return lc;
}

// log p(L | eta) = log c(K, eta) + sum_r (K + 2 eta - 3 - r) log L[r][r],
// rows r zero-indexed.
inline double lkj_chol_lpdf(std::span<const double> L, int K, double eta) {
  double lp = lkj_chol_log_norm(K, eta);
  for (int r = 1; r < K; ++r) {
    const double d = L[static_cast<std::size_t>(r) * K + r];
    if (!(d > 0.0)) return kNegInf;
    lp += (K + 2.0 * eta - 3.0 - r) * std::log(d);
  }
  return lp;
}

// ---------------------------------------------------------------------------
// Model context: resolved covariate attachments, layout, naming
// ---------------------------------------------------------------------------

class ModelContext {
 public:
  struct CoefBlock {
    std::vector<int> cov_idx;       // into CovariateSet (dyadic or actor pool)
    std::vector<double> prior_sd;   // numerator / sd(covariate)
    std::vector<std::string> names;
  };

  ModelContext(ModelSpec spec, CovariateSet covs, int n)
      : spec_(std::move(spec)), covs_(std::move(covs)), n_(n) {
    spec_.resize_blocks();
    spec_.prior.validate();
    if (n_ < 2) throw ValidationError("model needs at least 2 actors");
    if (covs_.n() != 0 && covs_.n() != n_)
      throw ValidationError("covariate set actor count does not match network");
    T_ = spec_.T();
    P_ = spec_.pairs();
    K_ = 2 * T_;
    ft_ = build_feature_table(T_);
    resolve_blocks();
    build_names();
  }

  const ModelSpec& spec() const { return spec_; }
  const CovariateSet& covariates() const { return covs_; }
  const PriorConfig& prior() const { return spec_.prior; }
  const FeatureTable& features() const { return ft_; }
  int n() const { return n_; }
  int T() const { return T_; }
  int K() const { return K_; }
  int P() const { return P_; }
  int n_fixed() const { return n_fixed_; }
  int n_outcomes() const { return ft_.n_outcomes; }

  const CoefBlock& density_block(int t) const { return dens_[static_cast<std::size_t>(t)]; }
  const CoefBlock& reciprocity_block(int t) const { return recip_[static_cast<std::size_t>(t)]; }
  const CoefBlock& cross_density_block(int p) const { return xdens_[static_cast<std::size_t>(p)]; }
  const CoefBlock& cross_recip_block(int p) const { return xrecip_[static_cast<std::size_t>(p)]; }
  const CoefBlock& sender_block(int t) const { return send_[static_cast<std::size_t>(t)]; }
  const CoefBlock& receiver_block(int t) const { return recv_[static_cast<std::size_t>(t)]; }

  const std::vector<std::string>& fixed_names() const { return fixed_names_; }
  const std::vector<double>& fixed_prior_sd() const { return fixed_prior_sd_; }

  // Offsets into the flattened fixed-effect vector (pack_fixed order).
  int off_mu() const { return 0; }
  int off_rho() const { return T_; }
  int off_mu_cross() const { return 2 * T_; }
  int off_rho_cross() const { return 2 * T_ + P_; }
  int off_delta_mu(int t) const { return off_dmu_[static_cast<std::size_t>(t)]; }
  int off_delta_rho(int t) const { return off_drho_[static_cast<std::size_t>(t)]; }
  int off_delta_mu_cross(int p) const { return off_dmux_[static_cast<std::size_t>(p)]; }
  int off_delta_rho_cross(int p) const { return off_drhox_[static_cast<std::size_t>(p)]; }
  int off_gamma_alpha(int t) const { return off_ga_[static_cast<std::size_t>(t)]; }
  int off_gamma_beta(int t) const { return off_gb_[static_cast<std::size_t>(t)]; }

  ParameterState zero_state() const {
    ParameterState s;
    s.mu.assign(static_cast<std::size_t>(T_), 0.0);
    s.rho.assign(static_cast<std::size_t>(T_), 0.0);
    s.mu_cross.assign(static_cast<std::size_t>(P_), 0.0);
    s.rho_cross.assign(static_cast<std::size_t>(P_), 0.0);
    auto zeros_like = [](const std::vector<CoefBlock>& blocks) {
      std::vector<std::vector<double>> out;
      for (const auto& b : blocks) out.emplace_back(b.cov_idx.size(), 0.0);
      return out;
    };
    s.delta_mu = zeros_like(dens_);
    s.delta_rho = zeros_like(recip_);
    s.delta_mu_cross = zeros_like(xdens_);
    s.delta_rho_cross = zeros_like(xrecip_);
    s.gamma_alpha = zeros_like(send_);
    s.gamma_beta = zeros_like(recv_);
    s.sigma.assign(static_cast<std::size_t>(K_), 1.0);
    s.chol.assign(static_cast<std::size_t>(K_) * K_, 0.0);
    for (int k = 0; k < K_; ++k) s.chol[static_cast<std::size_t>(k) * K_ + k] = 1.0;
    s.z_actor.assign(static_cast<std::size_t>(n_) * K_, 0.0);
    return s;
  }

  // Flattened fixed effects, in layout order.
  std::vector<double> pack_fixed(const ParameterState& s) const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n_fixed_));
    auto append = [&out](const std::vector<double>& v) {
      out.insert(out.end(), v.begin(), v.end());
    };
    append(s.mu);
    append(s.rho);
    append(s.mu_cross);
    append(s.rho_cross);
    for (const auto& v : s.delta_mu) append(v);
    for (const auto& v : s.delta_rho) append(v);
    for (const auto& v : s.delta_mu_cross) append(v);
    for (const auto& v : s.delta_rho_cross) append(v);
    for (const auto& v : s.gamma_alpha) append(v);
    for (const auto& v : s.gamma_beta) append(v);
    return out;
  }

  void unpack_fixed(std::span<const double> flat, ParameterState& s) const {
    std::size_t pos = 0;
    auto take = [&flat, &pos](std::vector<double>& v) {
      for (double& x : v) x = flat[pos++];
    };
    take(s.mu);
    take(s.rho);
    take(s.mu_cross);
    take(s.rho_cross);
    for (auto& v : s.delta_mu) take(v);
    for (auto& v : s.delta_rho) take(v);
    for (auto& v : s.delta_mu_cross) take(v);
    for (auto& v : s.delta_rho_cross) take(v);
    for (auto& v : s.gamma_alpha) take(v);
    for (auto& v : s.gamma_beta) take(v);
  }

 private:
  void resolve_blocks() {
    auto resolve = [this](const std::vector<std::string>& names, bool dyadic,
                          const std::string& family, const std::string& where) {
      CoefBlock block;
      for (const auto& name : names) {
        const int idx = dyadic ? covs_.dyadic_index(name) : covs_.actor_index(name);
        if (idx < 0)
          throw ValidationError("covariate '" + name + "' attached to " + family + " " + where +
                                " is not a " + (dyadic ? "dyadic" : "actor") + " covariate");
        const double sd = dyadic ? covs_.dyadic_sd(idx) : covs_.actor_sd(idx);
        if (!(sd > 0.0))
          throw ValidationError("covariate '" + name +
                                "' has zero sample standard deviation; the coefficient prior "
                                "scale is undefined");
        block.cov_idx.push_back(idx);
        block.prior_sd.push_back(spec_.prior.coeff_scale_numerator / sd);
        block.names.push_back(name);
      }
      return block;
    };
    for (int t = 0; t < T_; ++t) {
      const std::string where = "layer " + std::to_string(t + 1);
      dens_.push_back(resolve(spec_.density_covs[static_cast<std::size_t>(t)], true, "density", where));
      recip_.push_back(
          resolve(spec_.reciprocity_covs[static_cast<std::size_t>(t)], true, "reciprocity", where));
      send_.push_back(resolve(spec_.sender_covs[static_cast<std::size_t>(t)], false, "sender", where));
      recv_.push_back(
          resolve(spec_.receiver_covs[static_cast<std::size_t>(t)], false, "receiver", where));
    }
    for (int p = 0; p < P_; ++p) {
      const auto [t, s] = pair_layers(p, T_);
      const std::string where = "pair " + std::to_string(t + 1) + "," + std::to_string(s + 1);
      xdens_.push_back(resolve(spec_.cross_density_covs[static_cast<std::size_t>(p)], true,
                               "cross-density", where));
      xrecip_.push_back(resolve(spec_.cross_recip_covs[static_cast<std::size_t>(p)], true,
                                "cross-reciprocity", where));
    }
  }

  void build_names() {
    const double bsd = spec_.prior.baseline_sd;
    auto layer_tag = [](int t) { return "[" + std::to_string(t + 1) + "]"; };
    auto pair_tag = [this](int p) {
      const auto [t, s] = pair_layers(p, T_);
      return "[" + std::to_string(t + 1) + "," + std::to_string(s + 1) + "]";
    };
    auto add = [this](const std::string& name, double sd) {
      fixed_names_.push_back(name);
      fixed_prior_sd_.push_back(sd);
    };
    for (int t = 0; t < T_; ++t) add("mu" + layer_tag(t), bsd);
    for (int t = 0; t < T_; ++t) add("rho" + layer_tag(t), bsd);
    for (int p = 0; p < P_; ++p) add("mu_cross" + pair_tag(p), bsd);
    for (int p = 0; p < P_; ++p) add("rho_cross" + pair_tag(p), bsd);
    auto add_block = [&](const char* base, const std::vector<CoefBlock>& blocks, auto tag,
                         std::vector<int>& offsets) {
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        offsets.push_back(static_cast<int>(fixed_names_.size()));
        for (std::size_t k = 0; k < blocks[b].names.size(); ++k)
          add(std::string(base) + tag(static_cast<int>(b)) + "[" + blocks[b].names[k] + "]",
              blocks[b].prior_sd[k]);
      }
    };
    add_block("delta_mu", dens_, layer_tag, off_dmu_);
    add_block("delta_rho", recip_, layer_tag, off_drho_);
    add_block("delta_mu_cross", xdens_, pair_tag, off_dmux_);
    add_block("delta_rho_cross", xrecip_, pair_tag, off_drhox_);
    add_block("gamma_alpha", send_, layer_tag, off_ga_);
    add_block("gamma_beta", recv_, layer_tag, off_gb_);
    n_fixed_ = static_cast<int>(fixed_names_.size());
  }

  ModelSpec spec_;
  CovariateSet covs_;
  int n_;
  int T_ = 0;
  int P_ = 0;
  int K_ = 0;
  int n_fixed_ = 0;
  FeatureTable ft_;
  std::vector<CoefBlock> dens_, recip_, xdens_, xrecip_, send_, recv_;
  std::vector<std::string> fixed_names_;
  std::vector<double> fixed_prior_sd_;
  std::vector<int> off_dmu_, off_drho_, off_dmux_, off_drhox_, off_ga_, off_gb_;
};

// ---------------------------------------------------------------------------
// Effects and likelihood
// ---------------------------------------------------------------------------

// Dyad-level effect totals. mu_out applies to the tie i -> j, mu_in to
// j -> i; each direction uses its own covariate row (Z_ij vs Z_ji). The
// dyad-level reciprocity and cross-layer effects use Z_ij, read with the
// convention that i is the lower actor index.
struct DyadEffects {
  std::vector<double> mu_out, mu_in, rho;   // [T]
  std::vector<double> mu_cross, rho_cross;  // [P]
};

inline void dyad_effects(const ModelContext& ctx, const ParameterState& s, int i, int j,
                         DyadEffects& e) {
  const int T = ctx.T();
  const int P = ctx.P();
  e.mu_out.resize(static_cast<std::size_t>(T));
  e.mu_in.resize(static_cast<std::size_t>(T));
  e.rho.resize(static_cast<std::size_t>(T));
  e.mu_cross.resize(static_cast<std::size_t>(P));
  e.rho_cross.resize(static_cast<std::size_t>(P));
  const auto& covs = ctx.covariates();
  for (int t = 0; t < T; ++t) {
    const auto& db = ctx.density_block(t);
    double out = s.mu[static_cast<std::size_t>(t)];
    double in = s.mu[static_cast<std::size_t>(t)];
    for (std::size_t k = 0; k < db.cov_idx.size(); ++k) {
      out += s.delta_mu[static_cast<std::size_t>(t)][k] * covs.dyadic_value(db.cov_idx[k], i, j);
      in += s.delta_mu[static_cast<std::size_t>(t)][k] * covs.dyadic_value(db.cov_idx[k], j, i);
    }
    e.mu_out[static_cast<std::size_t>(t)] = out;
    e.mu_in[static_cast<std::size_t>(t)] = in;
    const auto& rb = ctx.reciprocity_block(t);
    double r = s.rho[static_cast<std::size_t>(t)];
    for (std::size_t k = 0; k < rb.cov_idx.size(); ++k)
      r += s.delta_rho[static_cast<std::size_t>(t)][k] * covs.dyadic_value(rb.cov_idx[k], i, j);
    e.rho[static_cast<std::size_t>(t)] = r;
  }
  for (int p = 0; p < P; ++p) {
    const auto& xb = ctx.cross_density_block(p);
    double cd = s.mu_cross[static_cast<std::size_t>(p)];
    for (std::size_t k = 0; k < xb.cov_idx.size(); ++k)
      cd += s.delta_mu_cross[static_cast<std::size_t>(p)][k] * covs.dyadic_value(xb.cov_idx[k], i, j);
    e.mu_cross[static_cast<std::size_t>(p)] = cd;
    const auto& xr = ctx.cross_recip_block(p);
    double cr = s.rho_cross[static_cast<std::size_t>(p)];
    for (std::size_t k = 0; k < xr.cov_idx.size(); ++k)
      cr += s.delta_rho_cross[static_cast<std::size_t>(p)][k] * covs.dyadic_value(xr.cov_idx[k], i, j);
    e.rho_cross[static_cast<std::size_t>(p)] = cr;
  }
}

inline DyadEffects dyad_effects(const ModelContext& ctx, const ParameterState& s, int i, int j) {
  DyadEffects e;
  dyad_effects(ctx, s, i, j, e);
  return e;
}

// Sender and receiver effects, n x T row-major (actor-major): alpha = X
// gamma_alpha + A, beta = X gamma_beta + B, with [A_i, B_i] interleaved in
// C_i = diag(sigma) chol z_i.
struct ActorEffects {
  std::vector<double> alpha, beta;  // [n][T]
  int T = 0;
  double a(int i, int t) const { return alpha[static_cast<std::size_t>(i) * T + t]; }
  double b(int i, int t) const { return beta[static_cast<std::size_t>(i) * T + t]; }
};

inline ActorEffects actor_effects(const ModelContext& ctx, const ParameterState& s) {
  ActorEffects eff;
  const int n = ctx.n();
  const int T = ctx.T();
  const int K = ctx.K();
  eff.T = T;
  eff.alpha.assign(static_cast<std::size_t>(n) * T, 0.0);
  eff.beta.assign(static_cast<std::size_t>(n) * T, 0.0);
  const auto& covs = ctx.covariates();
  std::vector<double> w(static_cast<std::size_t>(K));
  for (int i = 0; i < n; ++i) {
    const double* z = &s.z_actor[static_cast<std::size_t>(i) * K];
    for (int k = 0; k < K; ++k) {
      double acc = 0.0;
      for (int l = 0; l <= k; ++l) acc += s.chol[static_cast<std::size_t>(k) * K + l] * z[l];
      w[static_cast<std::size_t>(k)] = acc;
    }
    for (int t = 0; t < T; ++t) {
      double a = s.sigma[static_cast<std::size_t>(2 * t)] * w[static_cast<std::size_t>(2 * t)];
      double b =
          s.sigma[static_cast<std::size_t>(2 * t + 1)] * w[static_cast<std::size_t>(2 * t + 1)];
      const auto& sb = ctx.sender_block(t);
      for (std::size_t k = 0; k < sb.cov_idx.size(); ++k)
        a += s.gamma_alpha[static_cast<std::size_t>(t)][k] * covs.actor_value(sb.cov_idx[k], i);
      const auto& rb = ctx.receiver_block(t);
      for (std::size_t k = 0; k < rb.cov_idx.size(); ++k)
        b += s.gamma_beta[static_cast<std::size_t>(t)][k] * covs.actor_value(rb.cov_idx[k], i);
      eff.alpha[static_cast<std::size_t>(i) * T + t] = a;
      eff.beta[static_cast<std::size_t>(i) * T + t] = b;
    }
  }
  return eff;
}

// The full effect vector a dyad's score is linear in; layout matches
// FeatureTable.
inline void build_eta(const ModelContext& ctx, const DyadEffects& de, const ActorEffects& ae,
                      int i, int j, std::span<double> eta) {
  const auto& ft = ctx.features();
  for (int t = 0; t < ctx.T(); ++t) {
    eta[static_cast<std::size_t>(ft.f_out(t))] =
        de.mu_out[static_cast<std::size_t>(t)] + ae.a(i, t) + ae.b(j, t);
    eta[static_cast<std::size_t>(ft.f_in(t))] =
        de.mu_in[static_cast<std::size_t>(t)] + ae.a(j, t) + ae.b(i, t);
    eta[static_cast<std::size_t>(ft.f_rec(t))] = de.rho[static_cast<std::size_t>(t)];
  }
  for (int p = 0; p < ctx.P(); ++p) {
    eta[static_cast<std::size_t>(ft.f_cross_density(p))] = de.mu_cross[static_cast<std::size_t>(p)];
    eta[static_cast<std::size_t>(ft.f_cross_recip(p))] = de.rho_cross[static_cast<std::size_t>(p)];
  }
}

// Joint score of a fully observed outcome.
inline double dyad_score(const ModelContext& ctx, const DyadEffects& de, const ActorEffects& ae,
                         int i, int j, DyadOutcome outcome) {
  if (outcome.mask != 0)
    throw std::invalid_argument("dyad_score: outcome has masked entries; use dyad_log_lik");
  std::vector<double> eta(static_cast<std::size_t>(ctx.features().F));
  build_eta(ctx, de, ae, i, j, eta);
  return ctx.features().score(static_cast<int>(outcome.bits), eta);
}

// Log probabilities of all 2^(2T) outcomes on dyad {i, j}.
inline void dyad_log_prob_table(const ModelContext& ctx, std::span<const double> eta,
                                std::span<double> table) {
  const auto& ft = ctx.features();
  for (int o = 0; o < ft.n_outcomes; ++o) table[static_cast<std::size_t>(o)] = ft.score(o, eta);
  const double lse = log_sum_exp(std::span<const double>(table.data(), table.size()));
  for (double& v : table) v -= lse;
}

inline std::vector<double> dyad_log_prob_table(const ModelContext& ctx, const ParameterState& s,
                                               int i, int j) {
  const ActorEffects ae = actor_effects(ctx, s);
  const DyadEffects de = dyad_effects(ctx, s, i, j);
  std::vector<double> eta(static_cast<std::size_t>(ctx.features().F));
  build_eta(ctx, de, ae, i, j, eta);
  std::vector<double> table(static_cast<std::size_t>(ctx.n_outcomes()));
  dyad_log_prob_table(ctx, eta, table);
  return table;
}

// Enumerate all outcomes compatible with the observed bits (submasks of the
// missing mask filled in every way).
template <typename F>
void for_each_completion(DyadOutcome o, F&& fn) {
  const std::uint32_t base = o.bits & ~o.mask;
  std::uint32_t sub = o.mask;
  for (;;) {
    fn(base | sub);
    if (sub == 0) break;
    sub = (sub - 1) & o.mask;
  }
}

// Log likelihood of a possibly partially observed dyad outcome: a table
// lookup when fully observed, otherwise the log of the summed probabilities
// of all compatible completions.
inline double dyad_log_lik_from_table(std::span<const double> table, DyadOutcome o) {
  if (o.mask == 0) return table[o.bits];
  double m = kNegInf;
  for_each_completion(o, [&](std::uint32_t c) { m = std::max(m, table[c]); });
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for_each_completion(o, [&](std::uint32_t c) { s += std::exp(table[c] - m); });
  return m + std::log(s);
}

inline double dyad_log_lik(const ModelContext& ctx, const ParameterState& s, DyadOutcome o,
                           int i, int j) {
  const std::vector<double> table = dyad_log_prob_table(ctx, s, i, j);
  return dyad_log_lik_from_table(table, o);
}

// Sum of dyad log likelihoods over all unordered pairs, in fixed order.
inline double log_likelihood(const ModelContext& ctx, const ParameterState& s,
                             const MultiplexNetwork& net) {
  if (net.n() != ctx.n() || net.layer_count() != ctx.T())
    throw ValidationError("network shape does not match model context");
  const ActorEffects ae = actor_effects(ctx, s);
  DyadEffects de;
  std::vector<double> eta(static_cast<std::size_t>(ctx.features().F));
  std::vector<double> table(static_cast<std::size_t>(ctx.n_outcomes()));
  double total = 0.0;
  for_each_dyad(ctx.n(), [&](int i, int j) {
    dyad_effects(ctx, s, i, j, de);
    build_eta(ctx, de, ae, i, j, eta);
    dyad_log_prob_table(ctx, eta, table);
    total += dyad_log_lik_from_table(table, extract_dyad(net, i, j));
  });
  return total;
}

// Joint log prior: Normal(0, sd) on each fixed effect (baseline sd for
// baselines, numerator / sd(covariate) for coefficients), InverseGamma on
// the actor-effect scales, LKJ on the correlation Cholesky factor, and a
// standard normal on every non-centered actor latent.
inline double log_prior(const ModelContext& ctx, const ParameterState& s) {
  const PriorConfig& pc = ctx.prior();
  double lp = 0.0;
  const std::vector<double> fixed = ctx.pack_fixed(s);
  for (std::size_t f = 0; f < fixed.size(); ++f)
    lp += normal_lpdf(fixed[f], 0.0, ctx.fixed_prior_sd()[f]);
  for (double sk : s.sigma) {
    if (!(sk > 0.0)) throw std::invalid_argument("log_prior: sigma must be strictly positive");
    lp += inv_gamma_lpdf(sk, pc.sigma_shape, pc.sigma_scale);
  }
  lp += lkj_chol_lpdf(s.chol, ctx.K(), pc.lkj_eta);
  for (double z : s.z_actor) lp += std_normal_lpdf(z);
  return lp;
}

}  // namespace mp2
