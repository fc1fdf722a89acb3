#include <catch2/catch.hpp>

#include <cmath>
#include <filesystem>

#include "mp2/calibration.hpp"

using namespace mp2;

namespace {

ModelContext plain_context(int n, int T) {
  return ModelContext(ModelSpec::plain(T), CovariateSet(n), n);
}

// Fit stub whose "posterior" is fresh prior draws, ignoring the data. A
// correct rank statistic is then uniform by construction. A nonzero bias
// shifts each parameter's draws by that many of its own prior standard
// deviations.
FitFunction identity_sampler(const ModelContext& ctx, int n_draws, double bias_sds = 0.0) {
  const std::vector<int> monitored = monitored_indices(ctx, false);
  return [&ctx, monitored, n_draws, bias_sds](const MultiplexNetwork&, std::uint64_t seed) {
    Rng rng(seed);
    FitDraws out;
    out.draws.assign(monitored.size(), {});
    std::vector<double> report(static_cast<std::size_t>(report_dim(ctx)));
    for (int d = 0; d < n_draws; ++d) {
      const ParameterState s = draw_prior(ctx, rng);
      report_state(ctx, s, report);
      for (std::size_t p = 0; p < monitored.size(); ++p)
        out.draws[p].push_back(report[static_cast<std::size_t>(monitored[p])]);
    }
    if (bias_sds != 0.0)
      for (auto& draws : out.draws) {
        const double shift = bias_sds * sample_sd(draws);
        for (double& v : draws) v += shift;
      }
    return out;
  };
}

}  // namespace

TEST_CASE("rank histograms from a calibrated sampler are uniform", "[calibration]") {
  const ModelContext ctx = plain_context(4, 2);
  SbcOptions opt;
  opt.L = 200;
  opt.K = 100;
  opt.seed = 31;
  const SbcResult result = sbc_run(ctx, opt, identity_sampler(ctx, 150));
  REQUIRE(result.replications.size() == 200);
  CHECK(result.excluded.empty());
  for (const auto& ranks : result.ranks)
    for (int r : ranks) {
      CHECK(r >= 0);
      CHECK(r <= 100);
    }
  const std::vector<double> p = uniformity_check(result, 20);
  int passed = 0;
  for (double pv : p) passed += pv > 0.01;
  CHECK(passed >= static_cast<int>(0.95 * p.size()));
}

TEST_CASE("a biased sampler is caught by the rank statistic", "[calibration]") {
  const ModelContext ctx = plain_context(4, 2);
  SbcOptions opt;
  opt.L = 100;
  opt.K = 50;
  opt.seed = 77;
  const SbcResult result = sbc_run(ctx, opt, identity_sampler(ctx, 120, 3.0));
  const std::vector<double> p = uniformity_check(result, 10);
  // the upward-shifted posterior leaves the truth below most draws, so the
  // rank mass piles up at the bottom of [0, K]
  for (std::size_t param = 0; param < result.parameters.size(); ++param) {
    int low_ranks = 0;
    for (int r : result.ranks[param]) low_ranks += r <= 5;
    CHECK(low_ranks >= static_cast<int>(0.8 * result.ranks[param].size()));
  }
  int rejected = 0;
  for (double pv : p) rejected += pv < 0.01;
  CHECK(rejected == static_cast<int>(p.size()));
}

TEST_CASE("non-converged replications are excluded and counted", "[calibration]") {
  const ModelContext ctx = plain_context(4, 1);
  SbcOptions opt;
  opt.L = 10;
  opt.K = 20;
  opt.seed = 5;
  int calls = 0;
  FitFunction flaky = [&ctx, &calls](const MultiplexNetwork& net, std::uint64_t seed) {
    FitDraws fd = identity_sampler(ctx, 40)(net, seed);
    fd.converged = (++calls % 3) != 0;
    return fd;
  };
  const SbcResult result = sbc_run(ctx, opt, flaky);
  CHECK(result.excluded.size() + result.replications.size() == 10);
  CHECK(result.excluded.size() == 3);
}

TEST_CASE("checkpointed runs resume without refitting", "[calibration]") {
  const ModelContext ctx = plain_context(4, 1);
  const auto dir = std::filesystem::temp_directory_path() / "mp2_sbc_ckpt_test";
  std::filesystem::remove_all(dir);
  SbcOptions opt;
  opt.L = 8;
  opt.K = 25;
  opt.seed = 13;
  opt.checkpoint_dir = dir;
  const SbcResult fresh = sbc_run(ctx, opt, identity_sampler(ctx, 60));
  // resume: any further fit call would corrupt the ranks
  FitFunction forbidden = [](const MultiplexNetwork&, std::uint64_t) -> FitDraws {
    throw std::logic_error("fit called on a completed checkpoint");
  };
  const SbcResult resumed = sbc_run(ctx, opt, forbidden);
  CHECK(resumed.replications == fresh.replications);
  CHECK(resumed.ranks == fresh.ranks);
  std::filesystem::remove_all(dir);
}

TEST_CASE("uniformity p-values behave at the extremes", "[calibration]") {
  SECTION("exactly uniform ranks give p = 1") {
    std::vector<int> ranks;
    for (int copy = 0; copy < 2; ++copy)
      for (int r = 0; r <= 100; ++r) ranks.push_back(r);
    CHECK(chi_square_uniformity(ranks, 100, 20) == Approx(1.0).epsilon(1e-12));
  }
  SECTION("degenerate ranks give p near 0") {
    const std::vector<int> ranks(200, 0);
    CHECK(chi_square_uniformity(ranks, 100, 20) < 1e-12);
  }
  SECTION("hand-worked chi-square") {
    // K = 19, 4 bins of width 5, counts 20/10/5/5 against expected 10 each:
    // chi2 = 10 + 0 + 2.5 + 2.5 = 15, df = 3
    std::vector<int> ranks;
    for (int i = 0; i < 20; ++i) ranks.push_back(i % 5);
    for (int i = 0; i < 10; ++i) ranks.push_back(5 + i % 5);
    for (int i = 0; i < 5; ++i) ranks.push_back(10 + i % 5);
    for (int i = 0; i < 5; ++i) ranks.push_back(15 + i % 5);
    CHECK(chi_square_uniformity(ranks, 19, 4) == Approx(chi_square_sf(15.0, 3.0)).epsilon(1e-12));
    CHECK(chi_square_uniformity(ranks, 19, 4) == Approx(0.0018166).margin(1e-6));
  }
  SECTION("too few replications per bin are rejected") {
    const std::vector<int> ranks = {0, 1, 2, 3, 4};
    CHECK_THROWS_AS(chi_square_uniformity(ranks, 100, 20), std::invalid_argument);
  }
}

TEST_CASE("rank bounds are enforced", "[calibration]") {
  std::vector<int> bad(300, 5);
  bad.push_back(101);
  CHECK_THROWS_AS(chi_square_uniformity(bad, 100, 10), std::invalid_argument);
}

TEST_CASE("oversized K is rejected against the sampler budget", "[calibration]") {
  const ModelContext ctx = plain_context(4, 1);
  SbcOptions opt;
  opt.K = 5000;
  opt.L = 2;
  opt.sampler.chains = 2;
  opt.sampler.iterations = 100;
  opt.sampler.warmup = 50;
  CHECK_THROWS_AS(sbc_run(ctx, opt), ValidationError);
}

TEST_CASE("sensitivity summaries follow their definitions", "[calibration]") {
  const ModelContext ctx = plain_context(4, 1);
  const std::vector<int> monitored = monitored_indices(ctx, false);
  SensitivityOptions opt;
  opt.L = 3;
  opt.seed = 21;
  opt.prior_var_draws = 20000;

  SECTION("posterior centered at the truth gives zero z-scores") {
    // the stub reproduces the run's own seed chain to centre its draws at
    // the true values
    FitFunction centered = [&](const MultiplexNetwork&, std::uint64_t fit_seed) {
      // recover the replication seed: fit_seed = sub_seed(rep_seed, 1)
      FitDraws out;
      for (int rep = 0; rep < 3; ++rep) {
        const std::uint64_t rep_seed = sub_seed(opt.seed, static_cast<std::uint64_t>(rep));
        if (sub_seed(rep_seed, 1) != fit_seed) continue;
        Rng rng(rep_seed);
        const ParameterState truth = draw_prior(ctx, rng);
        std::vector<double> report(static_cast<std::size_t>(report_dim(ctx)));
        report_state(ctx, truth, report);
        for (int idx : monitored) {
          const double t = report[static_cast<std::size_t>(idx)];
          out.draws.push_back({t - 0.25, t, t + 0.25});  // mean exactly t
        }
        return out;
      }
      throw std::logic_error("unexpected fit seed");
    };
    const SensitivityResult result = sensitivity_run(ctx, opt, centered);
    REQUIRE(result.replications.size() == 3);
    for (const auto& zrow : result.z)
      for (double z : zrow) CHECK(z == Approx(0.0).margin(1e-12));
  }

  SECTION("contraction endpoints") {
    // constant draws: posterior variance 0, contraction 1, z undefined
    FitFunction constant = [&](const MultiplexNetwork&, std::uint64_t) {
      FitDraws out;
      out.draws.assign(monitored.size(), std::vector<double>(10, 1.234));
      return out;
    };
    const SensitivityResult result = sensitivity_run(ctx, opt, constant);
    for (std::size_t p = 0; p < result.parameters.size(); ++p)
      for (std::size_t r = 0; r < result.replications.size(); ++r) {
        CHECK(result.contraction[p][r] == Approx(1.0));
        CHECK(std::isnan(result.z[p][r]));
      }
    // draws with the prior's own spread: contraction near 0 for the
    // Normal(0, 10) baselines
    FitFunction wide = [&](const MultiplexNetwork&, std::uint64_t seed) {
      Rng rng(seed);
      FitDraws out;
      for (int idx : monitored) {
        std::vector<double> draws(4000);
        const bool is_baseline = idx < ctx.n_fixed();
        for (auto& v : draws) v = is_baseline ? rng.normal(0.0, 10.0) : rng.uniform();
        out.draws.push_back(std::move(draws));
      }
      return out;
    };
    const SensitivityResult wide_result = sensitivity_run(ctx, opt, wide);
    for (std::size_t p = 0; p < wide_result.parameters.size(); ++p) {
      if (static_cast<std::size_t>(monitored[p]) >= static_cast<std::size_t>(ctx.n_fixed()))
        continue;
      for (double s : wide_result.contraction[p]) CHECK(s == Approx(0.0).margin(0.15));
    }
    // posteriors wider than the prior keep their negative contraction
    FitFunction overdispersed = [&](const MultiplexNetwork&, std::uint64_t seed) {
      Rng rng(seed);
      FitDraws out;
      for (std::size_t p = 0; p < monitored.size(); ++p) {
        std::vector<double> draws(4000);
        for (auto& v : draws) v = rng.normal(0.0, 15.0);
        out.draws.push_back(std::move(draws));
      }
      return out;
    };
    const SensitivityResult conflict = sensitivity_run(ctx, opt, overdispersed);
    for (std::size_t p = 0; p < conflict.parameters.size(); ++p) {
      if (static_cast<std::size_t>(monitored[p]) >= static_cast<std::size_t>(ctx.n_fixed()))
        continue;
      // prior variance 100, posterior variance ~225: contraction near -1.25
      for (double s : conflict.contraction[p]) CHECK(s < -0.8);
    }
  }
}

TEST_CASE("prior variances mix analytic and Monte Carlo estimates", "[calibration]") {
  const ModelContext ctx = plain_context(4, 2);
  const std::vector<int> monitored = monitored_indices(ctx, false);
  const std::vector<double> v = prior_variances(ctx, monitored, 200000, 99);
  const std::vector<std::string> names = report_names(ctx);
  for (std::size_t p = 0; p < monitored.size(); ++p) {
    const std::string& name = names[static_cast<std::size_t>(monitored[p])];
    if (name.rfind("mu", 0) == 0 || name.rfind("rho", 0) == 0)
      CHECK(v[p] == Approx(100.0));
    if (name.rfind("sigma", 0) == 0)
      CHECK(v[p] == Approx(625.0).epsilon(0.35));  // beta^2 / ((a-1)^2 (a-2)); heavy tailed
    if (name.rfind("Omega", 0) == 0)
      CHECK(v[p] == Approx(1.0 / 7.0).epsilon(0.05));
  }
}

TEST_CASE("a small end-to-end calibration run completes", "[calibration]") {
  const ModelContext ctx = plain_context(6, 1);
  SbcOptions opt;
  opt.L = 3;
  opt.K = 40;
  opt.seed = 2;
  opt.sampler.chains = 2;
  opt.sampler.iterations = 300;
  opt.sampler.warmup = 150;
  const SbcResult result = sbc_run(ctx, opt);
  CHECK(result.replications.size() + result.excluded.size() == 3);
  for (const auto& ranks : result.ranks)
    for (int r : ranks) {
      CHECK(r >= 0);
      CHECK(r <= 40);
    }
}
