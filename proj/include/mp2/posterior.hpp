#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mp2/model.hpp"
#include "mp2/target.hpp"

namespace mp2 {

// Unconstrained coordinate layout: fixed effects as-is, log actor-effect
// scales, atanh canonical partial correlations of the correlation Cholesky
// factor (strict lower triangle, row-major), then the actor latents as-is.
struct UnconstrainedLayout {
  int n_fixed = 0;
  int K = 0;
  int n = 0;
  int n_pc = 0;
  int off_log_sigma = 0;
  int off_pc = 0;
  int off_z = 0;
  int dim = 0;
};

inline UnconstrainedLayout unconstrained_layout(const ModelContext& ctx) {
  UnconstrainedLayout l;
  l.n_fixed = ctx.n_fixed();
  l.K = ctx.K();
  l.n = ctx.n();
  l.n_pc = l.K * (l.K - 1) / 2;
  l.off_log_sigma = l.n_fixed;
  l.off_pc = l.off_log_sigma + l.K;
  l.off_z = l.off_pc + l.n_pc;
  l.dim = l.off_z + l.n * l.K;
  return l;
}

inline int unconstrained_dim(const ModelContext& ctx) { return unconstrained_layout(ctx).dim; }

inline ParameterState to_constrained(const ModelContext& ctx, std::span<const double> u) {
  const UnconstrainedLayout l = unconstrained_layout(ctx);
  ParameterState s = ctx.zero_state();
  ctx.unpack_fixed(u.subspan(0, static_cast<std::size_t>(l.n_fixed)), s);
  for (int k = 0; k < l.K; ++k)
    s.sigma[static_cast<std::size_t>(k)] = std::exp(u[static_cast<std::size_t>(l.off_log_sigma + k)]);
  std::vector<double> pc(static_cast<std::size_t>(l.n_pc));
  for (int e = 0; e < l.n_pc; ++e)
    pc[static_cast<std::size_t>(e)] = std::tanh(u[static_cast<std::size_t>(l.off_pc + e)]);
  s.chol = chol_from_partial_correlations(pc, l.K);
  for (int e = 0; e < l.n * l.K; ++e)
    s.z_actor[static_cast<std::size_t>(e)] = u[static_cast<std::size_t>(l.off_z + e)];
  return s;
}

inline std::vector<double> to_unconstrained(const ModelContext& ctx, const ParameterState& s) {
  const UnconstrainedLayout l = unconstrained_layout(ctx);
  std::vector<double> u(static_cast<std::size_t>(l.dim));
  const std::vector<double> fixed = ctx.pack_fixed(s);
  for (int f = 0; f < l.n_fixed; ++f) u[static_cast<std::size_t>(f)] = fixed[static_cast<std::size_t>(f)];
  for (int k = 0; k < l.K; ++k) {
    if (!(s.sigma[static_cast<std::size_t>(k)] > 0.0))
      throw std::invalid_argument("to_unconstrained: sigma must be strictly positive");
    u[static_cast<std::size_t>(l.off_log_sigma + k)] = std::log(s.sigma[static_cast<std::size_t>(k)]);
  }
  const std::vector<double> pc = partial_correlations_from_chol(s.chol, l.K);
  for (int e = 0; e < l.n_pc; ++e)
    u[static_cast<std::size_t>(l.off_pc + e)] = std::atanh(pc[static_cast<std::size_t>(e)]);
  for (int e = 0; e < l.n * l.K; ++e)
    u[static_cast<std::size_t>(l.off_z + e)] = s.z_actor[static_cast<std::size_t>(e)];
  return u;
}

// Log absolute Jacobian determinant of the unconstraining transform:
// sum of log sigma plus, per partial correlation in row r column c,
// (1 + (r - c - 1)/2) * log(1 - pc^2).
inline double transform_log_jacobian(const ModelContext& ctx, std::span<const double> u) {
  const UnconstrainedLayout l = unconstrained_layout(ctx);
  double lj = 0.0;
  for (int k = 0; k < l.K; ++k) lj += u[static_cast<std::size_t>(l.off_log_sigma + k)];
  int e = 0;
  for (int r = 1; r < l.K; ++r)
    for (int c = 0; c < r; ++c, ++e) {
      const double pc = std::tanh(u[static_cast<std::size_t>(l.off_pc + e)]);
      lj += (1.0 + 0.5 * (r - c - 1)) * std::log1p(-pc * pc);
    }
  return lj;
}

// ---------------------------------------------------------------------------
// Constrained reporting vector: fixed effects, sigma, Omega upper-triangle
// entries, actor effects C[i][k] = sigma_k (chol z_i)_k.
// ---------------------------------------------------------------------------

inline int report_dim(const ModelContext& ctx) {
  return ctx.n_fixed() + ctx.K() + ctx.K() * (ctx.K() - 1) / 2 + ctx.n() * ctx.K();
}

inline std::vector<std::string> report_names(const ModelContext& ctx) {
  std::vector<std::string> names = ctx.fixed_names();
  for (int k = 0; k < ctx.K(); ++k) names.push_back("sigma[" + std::to_string(k + 1) + "]");
  for (int k = 0; k < ctx.K(); ++k)
    for (int m = k + 1; m < ctx.K(); ++m)
      names.push_back("Omega[" + std::to_string(k + 1) + "," + std::to_string(m + 1) + "]");
  for (int i = 0; i < ctx.n(); ++i)
    for (int k = 0; k < ctx.K(); ++k)
      names.push_back("C[" + std::to_string(i + 1) + "][" + std::to_string(k + 1) + "]");
  return names;
}

inline void report_state(const ModelContext& ctx, const ParameterState& s, std::span<double> out) {
  const int K = ctx.K();
  std::size_t pos = 0;
  const std::vector<double> fixed = ctx.pack_fixed(s);
  for (double v : fixed) out[pos++] = v;
  for (int k = 0; k < K; ++k) out[pos++] = s.sigma[static_cast<std::size_t>(k)];
  const std::vector<double> omega = correlation_from_chol(s.chol, K);
  for (int k = 0; k < K; ++k)
    for (int m = k + 1; m < K; ++m) out[pos++] = omega[static_cast<std::size_t>(k) * K + m];
  for (int i = 0; i < ctx.n(); ++i) {
    const double* z = &s.z_actor[static_cast<std::size_t>(i) * K];
    for (int k = 0; k < K; ++k) {
      double acc = 0.0;
      for (int l = 0; l <= k; ++l) acc += s.chol[static_cast<std::size_t>(k) * K + l] * z[l];
      out[pos++] = s.sigma[static_cast<std::size_t>(k)] * acc;
    }
  }
}

// Rebuild a full ParameterState from one reported draw (fixed effects,
// sigma, Omega, C). Inverts the non-centered map exactly: z_i solves
// chol z_i = C_i / sigma.
inline ParameterState state_from_report(const ModelContext& ctx, std::span<const double> row) {
  const int K = ctx.K();
  ParameterState s = ctx.zero_state();
  std::size_t pos = 0;
  ctx.unpack_fixed(row.subspan(0, static_cast<std::size_t>(ctx.n_fixed())), s);
  pos += static_cast<std::size_t>(ctx.n_fixed());
  for (int k = 0; k < K; ++k) s.sigma[static_cast<std::size_t>(k)] = row[pos++];
  std::vector<double> omega(static_cast<std::size_t>(K) * K, 0.0);
  for (int k = 0; k < K; ++k) omega[static_cast<std::size_t>(k) * K + k] = 1.0;
  for (int k = 0; k < K; ++k)
    for (int m = k + 1; m < K; ++m) {
      const double v = row[pos++];
      omega[static_cast<std::size_t>(k) * K + m] = v;
      omega[static_cast<std::size_t>(m) * K + k] = v;
    }
  s.chol = chol_from_correlation(omega, K);
  std::vector<double> c(static_cast<std::size_t>(K));
  for (int i = 0; i < ctx.n(); ++i) {
    for (int k = 0; k < K; ++k) c[static_cast<std::size_t>(k)] = row[pos++];
    // forward substitution for z_i
    for (int k = 0; k < K; ++k) {
      double v = c[static_cast<std::size_t>(k)] / s.sigma[static_cast<std::size_t>(k)];
      for (int l = 0; l < k; ++l)
        v -= s.chol[static_cast<std::size_t>(k) * K + l] *
             s.z_actor[static_cast<std::size_t>(i) * K + l];
      s.z_actor[static_cast<std::size_t>(i) * K + k] =
          v / s.chol[static_cast<std::size_t>(k) * K + k];
    }
  }
  return s;
}

namespace detail {

// Hot per-dyad table kernels. Layer digit t of outcome o is (o >> 2t) & 3;
// the joint score is sum_t ls[t][digit_t] + sum_p xs[p][digit_t, digit_s].
// The xs tables are symmetric in (digit_t, digit_s), so orientation never
// matters. Kernels fill scores and unnormalized probabilities, and
// accumulate per-layer (marg, T x 4) and per-pair (pairm, P x 16) outcome
// marginals. Specializations keep the inner loops contiguous; layer counts
// above 3 take the generic path in the caller.
struct KernelSums {
  double mx = kNegInf;
  double sum = 0.0;
};

inline KernelSums dyad_kernel_t1(const double* ls, double* score, double* prob, double* marg) {
  KernelSums out;
  for (int a = 0; a < 4; ++a) {
    score[a] = ls[a];
    out.mx = std::max(out.mx, score[a]);
  }
  exp_shifted(score, prob, 4, out.mx);
  out.sum = sum_array(prob, 4);
  for (int a = 0; a < 4; ++a) marg[a] = prob[a];
  return out;
}

inline KernelSums dyad_kernel_t2(const double* ls, const double* xs, double* score, double* prob,
                                 double* marg, double* pairm) {
  KernelSums out;
  const double* ls0 = ls;
  const double* ls1 = ls + 4;
  for (int b = 0; b < 4; ++b) {
    const double base = ls1[b];
    const double* xrow = xs + b * 4;
    double* srow = score + b * 4;
    for (int a = 0; a < 4; ++a) {
      const double k = base + ls0[a] + xrow[a];
      srow[a] = k;
      out.mx = std::max(out.mx, k);
    }
  }
  exp_shifted(score, prob, 16, out.mx);
  out.sum = sum_array(prob, 16);
  for (int a = 0; a < 4; ++a)
    marg[a] = prob[a] + prob[4 + a] + prob[8 + a] + prob[12 + a];
  for (int b = 0; b < 4; ++b) {
    const double* row = prob + b * 4;
    marg[4 + b] = row[0] + row[1] + row[2] + row[3];
  }
  std::copy(prob, prob + 16, pairm);
  return out;
}

inline KernelSums dyad_kernel_t3(const double* ls, const double* xs, double* score, double* prob,
                                 double* marg, double* pairm) {
  KernelSums out;
  const double* ls0 = ls;
  const double* ls1 = ls + 4;
  const double* ls2 = ls + 8;
  const double* x01 = xs;       // pair (0,1)
  const double* x02 = xs + 16;  // pair (0,2)
  const double* x12 = xs + 32;  // pair (1,2)
  for (int c = 0; c < 4; ++c)
    for (int b = 0; b < 4; ++b) {
      const double base = ls2[c] + ls1[b] + x12[b * 4 + c];
      const double* r01 = x01 + b * 4;
      const double* r02 = x02 + c * 4;
      double* srow = score + c * 16 + b * 4;
      for (int a = 0; a < 4; ++a) {
        const double k = base + ls0[a] + r01[a] + r02[a];
        srow[a] = k;
        out.mx = std::max(out.mx, k);
      }
    }
  exp_shifted(score, prob, 64, out.mx);
  out.sum = sum_array(prob, 64);
  std::fill(marg, marg + 12, 0.0);
  std::fill(pairm, pairm + 48, 0.0);
  double* q01 = pairm;
  double* q02 = pairm + 16;
  double* q12 = pairm + 32;
  for (int c = 0; c < 4; ++c)
    for (int b = 0; b < 4; ++b) {
      const double* row = prob + c * 16 + b * 4;
      const double rs = row[0] + row[1] + row[2] + row[3];
      q12[b * 4 + c] = rs;
      if (rs == 0.0) continue;
      marg[4 + b] += rs;
      marg[8 + c] += rs;
      double* a01 = q01 + b * 4;
      double* a02 = q02 + c * 4;
      for (int a = 0; a < 4; ++a) {
        a01[a] += row[a];
        a02[a] += row[a];
      }
    }
  for (int a = 0; a < 4; ++a)
    marg[a] = q01[a] + q01[4 + a] + q01[8 + a] + q01[12 + a];
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Posterior target
// ---------------------------------------------------------------------------

class Posterior final : public LogDensity {
 public:
  Posterior(const ModelContext& ctx, const MultiplexNetwork& net) : ctx_(&ctx), net_(&net) {
    if (net.n() != ctx.n() || net.layer_count() != ctx.T())
      throw ValidationError("network shape does not match model context");
    for_each_dyad(ctx.n(), [&](int i, int j) { outcomes_.push_back(extract_dyad(net, i, j)); });
  }

  const ModelContext& context() const { return *ctx_; }

  std::size_t dim() const override {
    return static_cast<std::size_t>(unconstrained_dim(*ctx_));
  }

  std::size_t output_dim() const override { return static_cast<std::size_t>(report_dim(*ctx_)); }

  std::vector<std::string> output_names() const override { return report_names(*ctx_); }

  void outputs(std::span<const double> u, std::span<double> out) const override {
    const ParameterState s = to_constrained(*ctx_, u);
    report_state(*ctx_, s, out);
  }

  // Value-only evaluation through the shared constrained-space code path;
  // the gradient path below is validated against finite differences of this.
  double log_prob(std::span<const double> u) const {
    for (double v : u)
      if (!std::isfinite(v)) return kNegInf;
    const ParameterState s = to_constrained(*ctx_, u);
    for (double sk : s.sigma)
      if (!std::isfinite(sk) || sk <= 0.0) return kNegInf;
    const double lj = transform_log_jacobian(*ctx_, u);
    if (!std::isfinite(lj)) return kNegInf;
    const double lp = log_prior(*ctx_, s) + log_likelihood(*ctx_, s, *net_) + lj;
    return std::isfinite(lp) ? lp : kNegInf;
  }

  double log_prob_grad(std::span<const double> u, std::span<double> grad) const override {
    const UnconstrainedLayout l = unconstrained_layout(*ctx_);
    const ModelContext& ctx = *ctx_;
    const FeatureTable& ft = ctx.features();
    const int T = ctx.T();
    const int P = ctx.P();
    const int K = l.K;
    const int n = l.n;
    const int O = ft.n_outcomes;
    const int F = ft.F;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (double v : u)
      if (!std::isfinite(v)) return kNegInf;

    double value = 0.0;

    // --- unpack ---
    ParameterState s = ctx.zero_state();
    ctx.unpack_fixed(u.subspan(0, static_cast<std::size_t>(l.n_fixed)), s);
    for (int k = 0; k < K; ++k) {
      s.sigma[static_cast<std::size_t>(k)] = std::exp(u[static_cast<std::size_t>(l.off_log_sigma + k)]);
      if (!std::isfinite(s.sigma[static_cast<std::size_t>(k)]) ||
          s.sigma[static_cast<std::size_t>(k)] <= 0.0)
        return kNegInf;
    }
    std::vector<double> pc(static_cast<std::size_t>(l.n_pc));
    std::vector<double> pc_scale(static_cast<std::size_t>(l.n_pc));  // sqrt factor per entry
    for (int e = 0; e < l.n_pc; ++e)
      pc[static_cast<std::size_t>(e)] = std::tanh(u[static_cast<std::size_t>(l.off_pc + e)]);
    {
      int e = 0;
      for (int r = 1; r < K; ++r) {
        double rem = 1.0;
        for (int c = 0; c < r; ++c, ++e) {
          pc_scale[static_cast<std::size_t>(e)] = std::sqrt(rem);
          s.chol[static_cast<std::size_t>(r) * K + c] =
              pc[static_cast<std::size_t>(e)] * pc_scale[static_cast<std::size_t>(e)];
          rem *= (1.0 - pc[static_cast<std::size_t>(e)] * pc[static_cast<std::size_t>(e)]);
        }
        s.chol[static_cast<std::size_t>(r) * K + r] = std::sqrt(rem);
      }
    }
    for (int e = 0; e < n * K; ++e)
      s.z_actor[static_cast<std::size_t>(e)] = u[static_cast<std::size_t>(l.off_z + e)];

    // --- actor effects, caching w_i = chol z_i ---
    const auto& covs = ctx.covariates();
    std::vector<double> w(static_cast<std::size_t>(n) * K);
    std::vector<double> alpha(static_cast<std::size_t>(n) * T, 0.0);
    std::vector<double> beta(static_cast<std::size_t>(n) * T, 0.0);
    for (int i = 0; i < n; ++i) {
      const double* z = &s.z_actor[static_cast<std::size_t>(i) * K];
      for (int k = 0; k < K; ++k) {
        double acc = 0.0;
        for (int m = 0; m <= k; ++m) acc += s.chol[static_cast<std::size_t>(k) * K + m] * z[m];
        w[static_cast<std::size_t>(i) * K + k] = acc;
      }
      for (int t = 0; t < T; ++t) {
        double a = s.sigma[static_cast<std::size_t>(2 * t)] * w[static_cast<std::size_t>(i) * K + 2 * t];
        double b = s.sigma[static_cast<std::size_t>(2 * t + 1)] *
                   w[static_cast<std::size_t>(i) * K + 2 * t + 1];
        const auto& sb = ctx.sender_block(t);
        for (std::size_t q = 0; q < sb.cov_idx.size(); ++q)
          a += s.gamma_alpha[static_cast<std::size_t>(t)][q] * covs.actor_value(sb.cov_idx[q], i);
        const auto& rb = ctx.receiver_block(t);
        for (std::size_t q = 0; q < rb.cov_idx.size(); ++q)
          b += s.gamma_beta[static_cast<std::size_t>(t)][q] * covs.actor_value(rb.cov_idx[q], i);
        alpha[static_cast<std::size_t>(i) * T + t] = a;
        beta[static_cast<std::size_t>(i) * T + t] = b;
      }
    }

    // --- likelihood over dyads ---
    std::vector<double> gfixed(static_cast<std::size_t>(l.n_fixed), 0.0);
    std::vector<double> galpha(static_cast<std::size_t>(n) * T, 0.0);
    std::vector<double> gbeta(static_cast<std::size_t>(n) * T, 0.0);
    DyadEffects de;
    std::vector<double> eta(static_cast<std::size_t>(F));
    std::vector<double> score(static_cast<std::size_t>(O));
    std::vector<double> prob(static_cast<std::size_t>(O));
    std::vector<double> g_eta(static_cast<std::size_t>(F));
    // per-layer two-bit score tables and per-pair interaction tables; the
    // joint score decomposes as sum_t ls[t][o_t] + sum_p xs[p][o_t, o_s]
    std::vector<double> ls(static_cast<std::size_t>(T) * 4);
    std::vector<double> xs(static_cast<std::size_t>(P) * 16);
    std::vector<double> marg(static_cast<std::size_t>(T) * 4);
    std::vector<double> pair_marg(static_cast<std::size_t>(P) * 16);
    // co-occurrence counts per (g, h) two-bit pattern pair
    static constexpr std::int8_t kSame[16] = {0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 1, 1, 0, 1, 1, 2};
    static constexpr std::int8_t kOpposite[16] = {0, 0, 0, 0, 0, 0, 1, 1, 0, 1, 0, 1, 0, 1, 1, 2};
    std::size_t dyad_idx = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j, ++dyad_idx) {
        dyad_effects(ctx, s, i, j, de);
        for (int t = 0; t < T; ++t) {
          const double a = de.mu_out[static_cast<std::size_t>(t)] +
                           alpha[static_cast<std::size_t>(i) * T + t] +
                           beta[static_cast<std::size_t>(j) * T + t];
          const double b = de.mu_in[static_cast<std::size_t>(t)] +
                           alpha[static_cast<std::size_t>(j) * T + t] +
                           beta[static_cast<std::size_t>(i) * T + t];
          const double r = de.rho[static_cast<std::size_t>(t)];
          eta[static_cast<std::size_t>(ft.f_out(t))] = a;
          eta[static_cast<std::size_t>(ft.f_in(t))] = b;
          eta[static_cast<std::size_t>(ft.f_rec(t))] = r;
          ls[static_cast<std::size_t>(t) * 4 + 0] = 0.0;
          ls[static_cast<std::size_t>(t) * 4 + 1] = a;
          ls[static_cast<std::size_t>(t) * 4 + 2] = b;
          ls[static_cast<std::size_t>(t) * 4 + 3] = a + b + r;
        }
        for (int p = 0; p < P; ++p) {
          const double cd = de.mu_cross[static_cast<std::size_t>(p)];
          const double cr = de.rho_cross[static_cast<std::size_t>(p)];
          eta[static_cast<std::size_t>(ft.f_cross_density(p))] = cd;
          eta[static_cast<std::size_t>(ft.f_cross_recip(p))] = cr;
          for (int gh = 0; gh < 16; ++gh)
            xs[static_cast<std::size_t>(p) * 16 + gh] = cd * kSame[gh] + cr * kOpposite[gh];
        }
        detail::KernelSums ks;
        if (T == 1) {
          ks = detail::dyad_kernel_t1(ls.data(), score.data(), prob.data(), marg.data());
        } else if (T == 2) {
          ks = detail::dyad_kernel_t2(ls.data(), xs.data(), score.data(), prob.data(),
                                      marg.data(), pair_marg.data());
        } else if (T == 3) {
          ks = detail::dyad_kernel_t3(ls.data(), xs.data(), score.data(), prob.data(),
                                      marg.data(), pair_marg.data());
        } else {
          for (int o = 0; o < O; ++o) {
            const std::int8_t* dg = &ft.digits[static_cast<std::size_t>(o) * T];
            double k = 0.0;
            for (int t = 0; t < T; ++t) k += ls[static_cast<std::size_t>(t) * 4 + dg[t]];
            for (int p = 0; p < P; ++p)
              k += xs[static_cast<std::size_t>(p) * 16 +
                      dg[ft.pair_list[static_cast<std::size_t>(p)].first] * 4 +
                      dg[ft.pair_list[static_cast<std::size_t>(p)].second]];
            score[static_cast<std::size_t>(o)] = k;
            ks.mx = std::max(ks.mx, k);
          }
          std::fill(marg.begin(), marg.end(), 0.0);
          std::fill(pair_marg.begin(), pair_marg.end(), 0.0);
          exp_shifted(score.data(), prob.data(), O, ks.mx);
          ks.sum = sum_array(prob.data(), O);
          for (int o = 0; o < O; ++o) {
            const double po = prob[static_cast<std::size_t>(o)];
            if (po == 0.0) continue;
            const std::int8_t* dg = &ft.digits[static_cast<std::size_t>(o) * T];
            for (int t = 0; t < T; ++t) marg[static_cast<std::size_t>(t) * 4 + dg[t]] += po;
            for (int p = 0; p < P; ++p)
              pair_marg[static_cast<std::size_t>(p) * 16 +
                        dg[ft.pair_list[static_cast<std::size_t>(p)].first] * 4 +
                        dg[ft.pair_list[static_cast<std::size_t>(p)].second]] += po;
          }
        }
        const double lse = ks.mx + std::log(ks.sum);
        const double inv_sum = 1.0 / ks.sum;
        for (int t = 0; t < T; ++t) {
          const double* m = &marg[static_cast<std::size_t>(t) * 4];
          g_eta[static_cast<std::size_t>(ft.f_out(t))] = -(m[1] + m[3]) * inv_sum;
          g_eta[static_cast<std::size_t>(ft.f_in(t))] = -(m[2] + m[3]) * inv_sum;
          g_eta[static_cast<std::size_t>(ft.f_rec(t))] = -m[3] * inv_sum;
        }
        for (int p = 0; p < P; ++p) {
          const double* q = &pair_marg[static_cast<std::size_t>(p) * 16];
          double e_same = 0.0, e_opp = 0.0;
          for (int gh = 0; gh < 16; ++gh) {
            e_same += q[gh] * kSame[gh];
            e_opp += q[gh] * kOpposite[gh];
          }
          g_eta[static_cast<std::size_t>(ft.f_cross_density(p))] = -e_same * inv_sum;
          g_eta[static_cast<std::size_t>(ft.f_cross_recip(p))] = -e_opp * inv_sum;
        }
        const DyadOutcome oc = outcomes_[dyad_idx];
        if (oc.mask == 0) {
          value += score[oc.bits] - lse;
          for (std::uint32_t e = ft.row_begin[oc.bits]; e < ft.row_begin[oc.bits + 1]; ++e)
            g_eta[ft.feat_idx[e]] += static_cast<double>(ft.feat_val[e]);
        } else {
          double mx2 = kNegInf;
          for_each_completion(oc, [&](std::uint32_t c) { mx2 = std::max(mx2, score[c]); });
          double sum2 = 0.0;
          for_each_completion(oc, [&](std::uint32_t c) { sum2 += std::exp(score[c] - mx2); });
          const double lse2 = mx2 + std::log(sum2);
          value += lse2 - lse;
          for_each_completion(oc, [&](std::uint32_t c) {
            const double pw = std::exp(score[c] - lse2);
            for (std::uint32_t e = ft.row_begin[c]; e < ft.row_begin[c + 1]; ++e)
              g_eta[ft.feat_idx[e]] += pw * static_cast<double>(ft.feat_val[e]);
          });
        }
        // scatter into parameter gradients
        for (int t = 0; t < T; ++t) {
          const double ge_out = g_eta[static_cast<std::size_t>(ft.f_out(t))];
          const double ge_in = g_eta[static_cast<std::size_t>(ft.f_in(t))];
          const double ge_rec = g_eta[static_cast<std::size_t>(ft.f_rec(t))];
          gfixed[static_cast<std::size_t>(ctx.off_mu() + t)] += ge_out + ge_in;
          gfixed[static_cast<std::size_t>(ctx.off_rho() + t)] += ge_rec;
          galpha[static_cast<std::size_t>(i) * T + t] += ge_out;
          gbeta[static_cast<std::size_t>(j) * T + t] += ge_out;
          galpha[static_cast<std::size_t>(j) * T + t] += ge_in;
          gbeta[static_cast<std::size_t>(i) * T + t] += ge_in;
          const auto& db = ctx.density_block(t);
          for (std::size_t q = 0; q < db.cov_idx.size(); ++q)
            gfixed[static_cast<std::size_t>(ctx.off_delta_mu(t)) + q] +=
                ge_out * covs.dyadic_value(db.cov_idx[q], i, j) +
                ge_in * covs.dyadic_value(db.cov_idx[q], j, i);
          const auto& rb = ctx.reciprocity_block(t);
          for (std::size_t q = 0; q < rb.cov_idx.size(); ++q)
            gfixed[static_cast<std::size_t>(ctx.off_delta_rho(t)) + q] +=
                ge_rec * covs.dyadic_value(rb.cov_idx[q], i, j);
        }
        for (int p = 0; p < P; ++p) {
          const double ge_cd = g_eta[static_cast<std::size_t>(ft.f_cross_density(p))];
          const double ge_cr = g_eta[static_cast<std::size_t>(ft.f_cross_recip(p))];
          gfixed[static_cast<std::size_t>(ctx.off_mu_cross() + p)] += ge_cd;
          gfixed[static_cast<std::size_t>(ctx.off_rho_cross() + p)] += ge_cr;
          const auto& xb = ctx.cross_density_block(p);
          for (std::size_t q = 0; q < xb.cov_idx.size(); ++q)
            gfixed[static_cast<std::size_t>(ctx.off_delta_mu_cross(p)) + q] +=
                ge_cd * covs.dyadic_value(xb.cov_idx[q], i, j);
          const auto& xr = ctx.cross_recip_block(p);
          for (std::size_t q = 0; q < xr.cov_idx.size(); ++q)
            gfixed[static_cast<std::size_t>(ctx.off_delta_rho_cross(p)) + q] +=
                ge_cr * covs.dyadic_value(xr.cov_idx[q], i, j);
        }
      }
    }

    // --- chain actor-effect gradients into gamma, sigma, chol, z ---
    std::vector<double> gsigma(static_cast<std::size_t>(K), 0.0);
    std::vector<double> gchol(static_cast<std::size_t>(K) * K, 0.0);
    std::vector<double> gc(static_cast<std::size_t>(K));
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < T; ++t) {
        const double ga = galpha[static_cast<std::size_t>(i) * T + t];
        const double gb = gbeta[static_cast<std::size_t>(i) * T + t];
        gc[static_cast<std::size_t>(2 * t)] = ga;
        gc[static_cast<std::size_t>(2 * t + 1)] = gb;
        const auto& sb = ctx.sender_block(t);
        for (std::size_t q = 0; q < sb.cov_idx.size(); ++q)
          gfixed[static_cast<std::size_t>(ctx.off_gamma_alpha(t)) + q] +=
              ga * covs.actor_value(sb.cov_idx[q], i);
        const auto& rb = ctx.receiver_block(t);
        for (std::size_t q = 0; q < rb.cov_idx.size(); ++q)
          gfixed[static_cast<std::size_t>(ctx.off_gamma_beta(t)) + q] +=
              gb * covs.actor_value(rb.cov_idx[q], i);
      }
      const double* z = &s.z_actor[static_cast<std::size_t>(i) * K];
      for (int k = 0; k < K; ++k) {
        const double gck = gc[static_cast<std::size_t>(k)];
        gsigma[static_cast<std::size_t>(k)] += gck * w[static_cast<std::size_t>(i) * K + k];
        const double gsig = gck * s.sigma[static_cast<std::size_t>(k)];
        for (int m = 0; m <= k; ++m)
          gchol[static_cast<std::size_t>(k) * K + m] += gsig * z[m];
      }
      for (int m = 0; m < K; ++m) {
        double gz = -z[m];  // standard normal prior
        for (int k = m; k < K; ++k)
          gz += gc[static_cast<std::size_t>(k)] * s.sigma[static_cast<std::size_t>(k)] *
                s.chol[static_cast<std::size_t>(k) * K + m];
        grad[static_cast<std::size_t>(l.off_z) + static_cast<std::size_t>(i) * K + m] = gz;
        value += std_normal_lpdf(z[m]);
      }
    }

    // --- fixed-effect priors ---
    {
      const std::vector<double> fixed = ctx.pack_fixed(s);
      for (int f = 0; f < l.n_fixed; ++f) {
        const double sd = ctx.fixed_prior_sd()[static_cast<std::size_t>(f)];
        value += normal_lpdf(fixed[static_cast<std::size_t>(f)], 0.0, sd);
        gfixed[static_cast<std::size_t>(f)] -= fixed[static_cast<std::size_t>(f)] / (sd * sd);
        grad[static_cast<std::size_t>(f)] = gfixed[static_cast<std::size_t>(f)];
      }
    }

    // --- sigma prior + log transform ---
    const PriorConfig& prior = ctx.prior();
    for (int k = 0; k < K; ++k) {
      const double sk = s.sigma[static_cast<std::size_t>(k)];
      value += inv_gamma_lpdf(sk, prior.sigma_shape, prior.sigma_scale);
      value += u[static_cast<std::size_t>(l.off_log_sigma + k)];  // Jacobian log sigma
      gsigma[static_cast<std::size_t>(k)] +=
          -(prior.sigma_shape + 1.0) / sk + prior.sigma_scale / (sk * sk);
      grad[static_cast<std::size_t>(l.off_log_sigma + k)] =
          gsigma[static_cast<std::size_t>(k)] * sk + 1.0;
    }

    // --- LKJ prior on the Cholesky factor ---
    value += lkj_chol_log_norm(K, prior.lkj_eta);
    for (int r = 1; r < K; ++r) {
      const double d = s.chol[static_cast<std::size_t>(r) * K + r];
      if (!(d > 0.0)) return kNegInf;
      const double expo = K + 2.0 * prior.lkj_eta - 3.0 - r;
      value += expo * std::log(d);
      gchol[static_cast<std::size_t>(r) * K + r] += expo / d;
    }

    // --- partial-correlation transform: chain gchol back to pc, add the
    // Jacobian term, then the tanh derivative ---
    {
      int e_base = 0;
      for (int r = 1; r < K; ++r) {
        double suffix = gchol[static_cast<std::size_t>(r) * K + r] *
                        s.chol[static_cast<std::size_t>(r) * K + r];
        for (int c = r - 1; c >= 0; --c) {
          const int e = e_base + c;
          const double pcv = pc[static_cast<std::size_t>(e)];
          const double one_m = 1.0 - pcv * pcv;
          double gpc = gchol[static_cast<std::size_t>(r) * K + c] * pc_scale[static_cast<std::size_t>(e)] -
                       suffix * pcv / one_m;
          suffix += gchol[static_cast<std::size_t>(r) * K + c] *
                    s.chol[static_cast<std::size_t>(r) * K + c];
          value += (1.0 + 0.5 * (r - c - 1)) * std::log(one_m);
          gpc -= (r - c + 1.0) * pcv / one_m;
          grad[static_cast<std::size_t>(l.off_pc + e)] = gpc * one_m;
        }
        e_base += r;
      }
    }

    if (!std::isfinite(value)) {
      std::fill(grad.begin(), grad.end(), 0.0);
      return kNegInf;
    }
    return value;
  }

 private:
  const ModelContext* ctx_;
  const MultiplexNetwork* net_;
  std::vector<DyadOutcome> outcomes_;
};

}  // namespace mp2
