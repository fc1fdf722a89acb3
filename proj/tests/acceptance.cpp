// Acceptance suite: every entry checks an end-to-end statistical property of
// the library at a pinned tolerance and prints one PASS/FAIL line. The
// process exit code is the number of failed checks.

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mp2/calibration.hpp"
#include "mp2/gof.hpp"
#include "mp2/meta.hpp"
#include "mp2/posterior.hpp"
#include "mp2/sampler.hpp"
#include "mp2/simulate.hpp"
#include "oracles.hpp"

using namespace mp2;

namespace {

struct Result {
  std::string name;
  bool pass = false;
  std::string detail;
};

using Runner = std::function<std::vector<Result>()>;

ModelContext plain_context(int n, int T) {
  return ModelContext(ModelSpec::plain(T), CovariateSet(n), n);
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// probability tables normalize exactly
// ---------------------------------------------------------------------------

std::vector<Result> run_normalization() {
  const int n = 8;
  double worst = 0.0;
  int checked = 0;
  for (int T : {1, 2, 3}) {
    const ModelContext ctx = plain_context(n, T);
    Rng rng(1000 + static_cast<std::uint64_t>(T));
    const int states = T == 1 ? 334 : 333;
    std::vector<double> eta(static_cast<std::size_t>(ctx.features().F));
    std::vector<double> table(static_cast<std::size_t>(ctx.n_outcomes()));
    for (int rep = 0; rep < states; ++rep) {
      const ParameterState s = draw_prior(ctx, rng);
      const ActorEffects ae = actor_effects(ctx, s);
      DyadEffects de;
      for_each_dyad(n, [&](int i, int j) {
        dyad_effects(ctx, s, i, j, de);
        build_eta(ctx, de, ae, i, j, eta);
        dyad_log_prob_table(ctx, eta, table);
        double total = 0.0;
        for (double v : table) total += std::exp(v);
        worst = std::max(worst, std::fabs(total - 1.0));
        ++checked;
      });
    }
  }
  const bool pass = worst < 1e-12;
  return {{"normalization",
           pass,
           std::to_string(checked) + " dyad tables over T in {1,2,3}; worst |sum-1| = " +
               fmt(worst) + " (tolerance 1e-12)"}};
}

// ---------------------------------------------------------------------------
// likelihood equals an independently coded enumeration
// ---------------------------------------------------------------------------

std::vector<Result> run_brute_force() {
  const int n = 4;
  double worst = 0.0;
  // plain model for half the pairs, covariate-bearing model for the rest
  for (int variant = 0; variant < 2; ++variant) {
    ModelSpec spec = ModelSpec::plain(2);
    CovariateSet covs(n);
    if (variant == 1) {
      Rng crng(2222);
      std::vector<double> z(static_cast<std::size_t>(n) * n), x(static_cast<std::size_t>(n));
      for (auto& v : z) v = crng.normal();
      for (auto& v : x) v = crng.normal();
      covs.add_dyadic("z", z);
      covs.add_actor("x", x);
      spec.density_covs[0] = {"z"};
      spec.reciprocity_covs[1] = {"z"};
      spec.cross_density_covs[0] = {"z"};
      spec.cross_recip_covs[0] = {"z"};
      spec.sender_covs[0] = {"x"};
      spec.receiver_covs[1] = {"x"};
    }
    const ModelContext ctx(spec, covs, n);
    Rng rng(3000 + static_cast<std::uint64_t>(variant));
    for (int rep = 0; rep < 50; ++rep) {
      const ParameterState s = draw_prior(ctx, rng);
      MultiplexNetwork net(n, 2, spec.layers);
      for (int t = 0; t < 2; ++t)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            if (i != j) net.set(i, j, t, rng.uniform() < 0.5 ? 1 : 0);
      const double got = log_likelihood(ctx, s, net);
      const double want = oracle::log_likelihood(spec, covs, s, net);
      worst = std::max(worst, std::fabs(got - want));
    }
  }
  const bool pass = worst < 1e-10;
  return {{"brute_force_equivalence",
           pass,
           "100 random parameter/network pairs at T=2, n=4; worst |difference| = " + fmt(worst) +
               " (tolerance 1e-10)"}};
}

// ---------------------------------------------------------------------------
// analytic gradient vs central finite differences
// ---------------------------------------------------------------------------

std::vector<Result> run_gradient() {
  const int n = 10;
  ModelSpec spec = ModelSpec::plain(2);
  CovariateSet covs(n);
  Rng crng(4100);
  std::vector<double> z(static_cast<std::size_t>(n) * n), x(static_cast<std::size_t>(n));
  for (auto& v : z) v = crng.normal();
  for (auto& v : x) v = crng.normal();
  covs.add_dyadic("z", z);
  covs.add_actor("x", x);
  spec.density_covs[0] = {"z"};
  spec.sender_covs[1] = {"x"};
  const ModelContext ctx(spec, covs, n);
  MultiplexNetwork net(n, 2, spec.layers);
  Rng nrng(4200);
  for (int t = 0; t < 2; ++t)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) net.set(i, j, t, nrng.uniform() < 0.5 ? 1 : 0);
  const Posterior post(ctx, net);
  const double h = 1e-5;
  double worst = 0.0;
  Rng rng(4300);
  for (int rep = 0; rep < 10; ++rep) {
    const ParameterState s = draw_prior(ctx, rng);
    const std::vector<double> u = to_unconstrained(ctx, s);
    std::vector<double> g(u.size());
    post.log_prob_grad(u, g);
    const std::vector<double> fd = oracle::central_differences(
        [&post](const std::vector<double>& q) { return post.log_prob(q); }, u, h);
    for (std::size_t c = 0; c < u.size(); ++c) {
      const double rel =
          std::fabs(g[c] - fd[c]) / std::max({1.0, std::fabs(g[c]), std::fabs(fd[c])});
      worst = std::max(worst, rel);
    }
  }
  const bool pass = worst < 1e-5;
  return {{"gradient_correctness",
           pass,
           "10 prior draws, n=10, T=2, dyadic+actor covariates; worst per-coordinate relative "
           "error vs central differences (h=1e-5) = " +
               fmt(worst) + " (tolerance 1e-5)"}};
}

// ---------------------------------------------------------------------------
// missing-data marginalization renormalizes for every mask pattern
// ---------------------------------------------------------------------------

std::vector<Result> run_marginalization() {
  const ModelContext ctx = plain_context(5, 2);
  Rng rng(5100);
  double worst = 0.0;
  for (int rep = 0; rep < 25; ++rep) {
    const ParameterState s = draw_prior(ctx, rng);
    const int i = static_cast<int>(rng.uniform_int(4));
    const int j = i + 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(4 - i)));
    for (std::uint32_t mask = 0; mask < 16; ++mask) {
      double total = 0.0;
      const std::uint32_t observed = ~mask & 0xFu;
      const int free_bits = std::popcount(observed);
      for (std::uint32_t pattern = 0; pattern < (1u << free_bits); ++pattern) {
        std::uint32_t bits = 0;
        std::uint32_t src = pattern;
        for (int b = 0; b < 4; ++b)
          if (observed & (1u << b)) {
            if (src & 1u) bits |= 1u << b;
            src >>= 1;
          }
        total += std::exp(dyad_log_lik(ctx, s, DyadOutcome{bits, mask}, i, j));
      }
      worst = std::max(worst, std::fabs(total - 1.0));
    }
  }
  const bool pass = worst < 1e-12;
  return {{"missing_data_marginalization",
           pass,
           "all 16 mask patterns at T=2 across 25 prior draws; worst |sum-1| = " + fmt(worst) +
               " (tolerance 1e-12)"}};
}

// ---------------------------------------------------------------------------
// prior predictive coverage
// ---------------------------------------------------------------------------

std::vector<Result> run_prior_predictive() {
  const ModelContext ctx = plain_context(30, 2);
  const SimBatch batch = simulate_prior_batch(ctx, 1000, 6100, default_thread_count());
  std::vector<double> dens, recip, trans;
  for (const auto& net : batch.networks)
    for (int t = 0; t < 2; ++t) {
      dens.push_back(density(net, t));
      recip.push_back(reciprocity(net, t));
      trans.push_back(transitivity(net, t));
    }
  auto med = [](std::vector<double> v) { return quantile(std::move(v), 0.5); };
  auto span_ok = [](const std::vector<double>& v) {
    return *std::min_element(v.begin(), v.end()) <= 0.05 &&
           *std::max_element(v.begin(), v.end()) >= 0.95;
  };
  const double dmed = med(dens);
  const double rmed = med(recip);
  const bool pass = dmed >= 0.4 && dmed <= 0.6 && rmed >= 0.4 && rmed <= 0.6 && span_ok(dens) &&
                    span_ok(recip) && span_ok(trans);
  return {{"prior_predictive",
           pass,
           "1000 prior biplex networks (n=30): density median " + fmt(dmed) +
               ", reciprocity median " + fmt(rmed) +
               " (required in [0.4,0.6]); density/reciprocity/transitivity ranges span "
               "[0.05,0.95]: " +
               (span_ok(dens) && span_ok(recip) && span_ok(trans) ? "yes" : "no")}};
}

// ---------------------------------------------------------------------------
// goodness-of-fit statistics against exact oracles
// ---------------------------------------------------------------------------

std::vector<Result> run_gof_oracle() {
  Rng rng(7100);
  int census_fail = 0;
  double jaccard_worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 3 + static_cast<int>(rng.uniform_int(6));  // up to 8 actors
    MultiplexNetwork net(n, 2);
    for (int t = 0; t < 2; ++t)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (i != j) net.set(i, j, t, rng.uniform() < 0.1 + 0.08 * (rep % 9) ? 1 : 0);
    // census vs isomorphism classification of every triple
    const std::array<long, 16> got = triad_census(net, 0);
    std::array<long, 16> want{};
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        for (int c = b + 1; c < n; ++c) {
          std::array<std::array<bool, 3>, 3> m{};
          const int ids[3] = {a, b, c};
          for (int xx = 0; xx < 3; ++xx)
            for (int yy = 0; yy < 3; ++yy)
              if (xx != yy)
                m[static_cast<std::size_t>(xx)][static_cast<std::size_t>(yy)] =
                    net(ids[xx], ids[yy], 0) == 1;
          ++want[static_cast<std::size_t>(oracle::classify_triad_iso(m))];
        }
    if (got != want) ++census_fail;
    // jaccard statistics vs explicit set arithmetic
    long inter = 0, uni = 0, xinter = 0, xuni = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const bool a = net(i, j, 0) == 1;
        const bool b = net(i, j, 1) == 1;
        const bool bt = net(j, i, 1) == 1;
        inter += a && b;
        uni += a || b;
        xinter += a && bt;
        xuni += a || bt;
      }
    const double jac_want = uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
    const double xjac_want = xuni == 0 ? 1.0 : static_cast<double>(xinter) / xuni;
    jaccard_worst = std::max(jaccard_worst, std::fabs(jaccard(net, 0, 1) - jac_want));
    jaccard_worst =
        std::max(jaccard_worst, std::fabs(cross_reciprocity_jaccard(net, 0, 1) - xjac_want));
  }
  const bool pass = census_fail == 0 && jaccard_worst == 0.0;
  return {{"gof_oracle",
           pass,
           "50 random layers (n<=8): census mismatches " + std::to_string(census_fail) +
               ", worst jaccard deviation " + fmt(jaccard_worst) + " (both must be 0)"}};
}

// ---------------------------------------------------------------------------
// scaled simulation-based calibration
// ---------------------------------------------------------------------------

std::vector<Result> run_sbc() {
  const ModelContext ctx = plain_context(15, 2);
  SbcOptions opt;
  opt.L = 200;
  opt.K = 100;
  opt.seed = 8100;
  opt.threads = default_thread_count();
  opt.sampler.chains = 2;
  opt.sampler.iterations = 1000;
  opt.sampler.warmup = 500;
  const SbcResult result = sbc_run(ctx, opt);
  const std::vector<double> p = uniformity_check(result, 20);
  int passed = 0;
  for (double pv : p) passed += pv > 0.01;
  const double frac = static_cast<double>(passed) / p.size();
  const bool pass = frac >= 0.90;
  return {{"sbc_uniformity",
           pass,
           "L=200, K=100, n=15, T=2: " + std::to_string(passed) + "/" +
               std::to_string(p.size()) +
               " parameters not rejected at level 0.01 (need >= 90%); excluded replications: " +
               std::to_string(result.excluded.size())}};
}

// ---------------------------------------------------------------------------
// posterior z-scores and contraction
// ---------------------------------------------------------------------------

std::vector<Result> run_sensitivity() {
  const ModelContext ctx = plain_context(30, 2);
  SensitivityOptions opt;
  opt.L = 100;
  opt.seed = 9100;
  opt.threads = default_thread_count();
  opt.sampler.chains = 2;
  opt.sampler.iterations = 1000;
  opt.sampler.warmup = 500;
  const SensitivityResult result = sensitivity_run(ctx, opt);
  double worst_mean_z = 0.0;
  std::vector<double> baseline_contractions;
  for (std::size_t pi = 0; pi < result.parameters.size(); ++pi) {
    std::vector<double> finite;
    for (double z : result.z[pi])
      if (!std::isnan(z)) finite.push_back(z);
    if (!finite.empty()) worst_mean_z = std::max(worst_mean_z, std::fabs(mean(finite)));
    const std::string& name = result.parameters[pi];
    const bool dyadic_baseline = name.rfind("mu", 0) == 0 || name.rfind("rho", 0) == 0;
    if (dyadic_baseline)
      baseline_contractions.insert(baseline_contractions.end(), result.contraction[pi].begin(),
                                   result.contraction[pi].end());
  }
  const double med_contraction = quantile(baseline_contractions, 0.5);
  const bool pass = worst_mean_z <= 0.5 && med_contraction > 0.5;
  return {{"sensitivity",
           pass,
           "100 replications at n=30, T=2: worst |mean z| = " + fmt(worst_mean_z) +
               " (limit 0.5); median dyadic-baseline contraction = " + fmt(med_contraction) +
               " (must exceed 0.5); excluded: " + std::to_string(result.excluded.size())}};
}

// ---------------------------------------------------------------------------
// parameter recovery and the convergence gate share one set of fits
// ---------------------------------------------------------------------------

std::vector<Result> run_recovery() {
  const int n = 30, T = 3, reps = 50;
  const ModelContext ctx = plain_context(n, T);
  ParameterState truth = ctx.zero_state();
  std::fill(truth.mu.begin(), truth.mu.end(), -2.1);
  std::fill(truth.rho.begin(), truth.rho.end(), 1.97);
  std::fill(truth.mu_cross.begin(), truth.mu_cross.end(), 1.14);
  std::fill(truth.rho_cross.begin(), truth.rho_cross.end(), 2.49);
  std::fill(truth.sigma.begin(), truth.sigma.end(), 5.0);

  const int n_fixed = ctx.n_fixed();  // the 12 quantities with a stated truth
  std::vector<double> truth_fixed = ctx.pack_fixed(truth);

  struct RepOutcome {
    int covered = 0;
    bool converged = false;
  };
  std::vector<RepOutcome> outcomes(reps);
  const std::vector<std::string> names = report_names(ctx);
  parallel_for(static_cast<std::size_t>(reps), default_thread_count(), [&](std::size_t rep) {
    const std::uint64_t rep_seed = sub_seed(10100, rep);
    Rng rng(rep_seed);
    ParameterState gen = truth;
    for (auto& z : gen.z_actor) z = rng.normal();
    const MultiplexNetwork net = simulate_network(ctx, gen, rng);
    SamplerConfig cfg;
    cfg.chains = 4;
    cfg.iterations = 2000;
    cfg.seed = sub_seed(rep_seed, 1);
    cfg.threads = 1;
    const Posterior post(ctx, net);
    const SampleResult res = sample(post, cfg);
    RepOutcome& out = outcomes[rep];
    out.converged = true;
    for (int col = 0; col < res.draws.n_cols; ++col)
      if (!(rhat(res.draws, col) < 1.05)) out.converged = false;
    for (int f = 0; f < n_fixed; ++f) {
      std::vector<double> column = res.draws.column(f);
      std::sort(column.begin(), column.end());
      const double lo = quantile_sorted(column, 0.025);
      const double hi = quantile_sorted(column, 0.975);
      if (truth_fixed[static_cast<std::size_t>(f)] >= lo &&
          truth_fixed[static_cast<std::size_t>(f)] <= hi)
        ++out.covered;
    }
  });
  int covered_cells = 0, converged_reps = 0;
  for (const auto& out : outcomes) {
    covered_cells += out.covered;
    converged_reps += out.converged;
  }
  const int total_cells = reps * n_fixed;
  const double coverage = static_cast<double>(covered_cells) / total_cells;
  const double conv_frac = static_cast<double>(converged_reps) / reps;
  std::vector<Result> results;
  results.push_back(
      {"parameter_recovery", coverage >= 0.90,
       "50 replications at n=30, T=3 (true mu=-2.1, rho=1.97, mu_cross=1.14, rho_cross=2.49): " +
           std::to_string(covered_cells) + "/" + std::to_string(total_cells) +
           " fixed-effect cells covered by 95% CIs = " + fmt(coverage) + " (need >= 0.90)"});
  results.push_back({"convergence_gate", conv_frac >= 0.95,
                     "4 chains x 2000 iterations: all-parameter R-hat < 1.05 in " +
                         std::to_string(converged_reps) + "/" + std::to_string(reps) +
                         " replications = " + fmt(conv_frac) + " (need >= 0.95)"});
  return results;
}

// ---------------------------------------------------------------------------
// meta-analysis recovery and the precision-weighting limit
// ---------------------------------------------------------------------------

std::vector<Result> run_meta_recovery() {
  const double mu_true = 2.62, tau_true = 0.8;
  const int J = 34, reps = 100;
  const MetaPrior prior;
  std::vector<std::uint8_t> covered(reps, 0);
  parallel_for(static_cast<std::size_t>(reps), default_thread_count(), [&](std::size_t rep) {
    const std::uint64_t rep_seed = sub_seed(11100, rep);
    Rng rng(rep_seed);
    std::vector<GroupEstimate> groups;
    for (int j = 0; j < J; ++j) {
      GroupEstimate g;
      g.group = "g" + std::to_string(j + 1);
      const double theta = mu_true + tau_true * rng.normal();
      g.se = rng.uniform(0.2, 0.6);
      g.theta_hat = theta + g.se * rng.normal();
      groups.push_back(std::move(g));
    }
    SamplerConfig cfg;
    cfg.chains = 4;
    cfg.iterations = 2000;
    cfg.seed = sub_seed(rep_seed, 1);
    cfg.threads = 1;
    const SampleResult res = meta_fit(groups, prior, cfg);
    const MetaSummary s = meta_summarize(res.draws);
    covered[rep] = (mu_true >= s.mu.q025 && mu_true <= s.mu.q975) ? 1 : 0;
  });
  int covered_count = 0;
  for (std::uint8_t c : covered) covered_count += c;

  // deterministic small-tau limit check on one fixed panel
  Rng rng(11200);
  std::vector<GroupEstimate> groups;
  for (int j = 0; j < J; ++j) {
    GroupEstimate g;
    g.group = "g" + std::to_string(j + 1);
    g.theta_hat = mu_true + tau_true * rng.normal();
    g.se = rng.uniform(0.2, 0.6);
    groups.push_back(std::move(g));
  }
  const double limit_gap =
      std::fabs(conditional_mu_posterior(groups, prior, 1e-6).mean - precision_weighted_mean(groups));

  const bool pass = covered_count >= 90 && limit_gap < 1e-3;
  return {{"meta_recovery",
           pass,
           "J=34 groups from (mu*, tau*) = (2.62, 0.8): 95% CI covered mu* in " +
               std::to_string(covered_count) + "/100 replications (need >= 90); "
               "precision-weighted-mean limit gap = " +
               fmt(limit_gap) + " (tolerance 1e-3)"}};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, Runner>> criteria = {
      {"normalization", run_normalization},
      {"brute_force", run_brute_force},
      {"gradient", run_gradient},
      {"marginalization", run_marginalization},
      {"prior_predictive", run_prior_predictive},
      {"gof_oracle", run_gof_oracle},
      {"meta_recovery", run_meta_recovery},
      {"sbc", run_sbc},
      {"sensitivity", run_sensitivity},
      {"recovery", run_recovery},
  };
  std::vector<std::string> selected;
  for (int a = 1; a < argc; ++a) selected.emplace_back(argv[a]);
  if (!selected.empty() && selected[0] == "--list") {
    for (const auto& [name, fn] : criteria) std::printf("%s\n", name.c_str());
    return 0;
  }
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (!selected.empty() &&
        std::find(selected.begin(), selected.end(), name) == selected.end())
      continue;
    std::vector<Result> results;
    try {
      results = fn();
    } catch (const std::exception& e) {
      results = {{name, false, std::string("exception: ") + e.what()}};
    }
    for (const auto& r : results) {
      std::printf("%s  %-28s  %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                  r.detail.c_str());
      std::fflush(stdout);
      failures += r.pass ? 0 : 1;
    }
  }
  return failures;
}
