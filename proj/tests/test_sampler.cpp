#include <catch2/catch.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "mp2/math.hpp"
#include "mp2/rng.hpp"
#include "mp2/sampler.hpp"

using namespace mp2;

namespace {

struct StdNormal final : LogDensity {
  std::size_t d;
  explicit StdNormal(std::size_t dim_in) : d(dim_in) {}
  std::size_t dim() const override { return d; }
  double log_prob_grad(std::span<const double> x, std::span<double> g) const override {
    double lp = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      g[i] = -x[i];
      lp -= 0.5 * x[i] * x[i];
    }
    return lp;
  }
};

struct CorrNormal final : LogDensity {
  double rho;
  explicit CorrNormal(double r) : rho(r) {}
  std::size_t dim() const override { return 2; }
  double log_prob_grad(std::span<const double> x, std::span<double> g) const override {
    const double det = 1.0 - rho * rho;
    g[0] = -(x[0] - rho * x[1]) / det;
    g[1] = -(x[1] - rho * x[0]) / det;
    return -0.5 * (x[0] * x[0] - 2.0 * rho * x[0] * x[1] + x[1] * x[1]) / det;
  }
};

DrawsMatrix matrix_from_chains(const std::vector<std::vector<double>>& chains) {
  DrawsMatrix d;
  d.n_chains = static_cast<int>(chains.size());
  d.n_draws = static_cast<int>(chains.front().size());
  d.n_cols = 1;
  d.names = {"x"};
  for (const auto& c : chains) d.data.insert(d.data.end(), c.begin(), c.end());
  d.divergent.assign(static_cast<std::size_t>(d.total_draws()), 0);
  return d;
}

}  // namespace

TEST_CASE("standard normal moments are recovered", "[sampler]") {
  StdNormal target(2);
  SamplerConfig cfg;
  cfg.chains = 4;
  cfg.iterations = 2000;
  cfg.seed = 314;
  const SampleResult res = sample(target, cfg);
  REQUIRE(res.draws.total_draws() == 4000);
  for (int col = 0; col < 2; ++col) {
    const std::vector<double> x = res.draws.column(col);
    CHECK(mean(x) == Approx(0.0).margin(0.05));
    CHECK(sample_sd(x) == Approx(1.0).margin(0.05));
  }
}

TEST_CASE("correlated target recovers its correlation", "[sampler]") {
  CorrNormal target(0.9);
  SamplerConfig cfg;
  cfg.chains = 4;
  cfg.iterations = 2000;
  cfg.seed = 217;
  const SampleResult res = sample(target, cfg);
  const std::vector<double> a = res.draws.column(0);
  const std::vector<double> b = res.draws.column(1);
  CHECK(pearson_correlation(a, b) == Approx(0.9).margin(0.05));
}

TEST_CASE("same seed and config give bit-identical draws", "[sampler]") {
  StdNormal target(3);
  SamplerConfig cfg;
  cfg.chains = 2;
  cfg.iterations = 400;
  cfg.seed = 99;
  const SampleResult a = sample(target, cfg);
  const SampleResult b = sample(target, cfg);
  CHECK(a.draws.data == b.draws.data);
  CHECK(a.draws.divergent == b.draws.divergent);
  cfg.seed = 100;
  const SampleResult c = sample(target, cfg);
  CHECK(a.draws.data != c.draws.data);
}

TEST_CASE("empirical distribution matches the analytic law", "[sampler]") {
  StdNormal target(1);
  SamplerConfig cfg;
  cfg.chains = 4;
  cfg.iterations = 2000;
  cfg.seed = 2024;
  const SampleResult res = sample(target, cfg);
  std::vector<double> x = res.draws.column(0);
  std::sort(x.begin(), x.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double cdf = normal_cdf(x[i]);
    const double lo = static_cast<double>(i) / x.size();
    const double hi = static_cast<double>(i + 1) / x.size();
    ks = std::max({ks, std::fabs(cdf - lo), std::fabs(cdf - hi)});
  }
  CHECK(ks < 0.05);
}

TEST_CASE("acceptance statistic settles near its target", "[sampler]") {
  StdNormal target(5);
  SamplerConfig cfg;
  cfg.chains = 4;
  cfg.iterations = 2000;
  cfg.seed = 5150;
  const SampleResult res = sample(target, cfg);
  double acc = 0.0;
  for (const auto& cd : res.chain_diag) acc += cd.mean_accept;
  acc /= res.chain_diag.size();
  CHECK(acc == Approx(cfg.target_accept).margin(0.05));
  for (const auto& cd : res.chain_diag) CHECK(cd.divergences == 0);
}

TEST_CASE("split R-hat flags separated chains and passes mixed ones", "[sampler]") {
  SECTION("same-distribution chains") {
    Rng rng(1);
    std::vector<std::vector<double>> chains(4, std::vector<double>(1000));
    for (auto& c : chains)
      for (auto& v : c) v = rng.normal();
    const DrawsMatrix d = matrix_from_chains(chains);
    CHECK(rhat(d, 0) < 1.05);
  }
  SECTION("chains at different locations") {
    Rng rng(2);
    std::vector<std::vector<double>> chains(2, std::vector<double>(1000));
    for (auto& v : chains[0]) v = rng.normal();
    for (auto& v : chains[1]) v = 100.0 + rng.normal();
    const DrawsMatrix d = matrix_from_chains(chains);
    CHECK(rhat(d, 0) > 5.0);
  }
  SECTION("hand-computed two-chain example") {
    const DrawsMatrix d = matrix_from_chains({{1, 2, 3, 4}, {2, 3, 4, 5}});
    // split halves: {1,2} {3,4} {2,3} {4,5}; W = 0.5, var(means) = 5/3
    const double expected = std::sqrt((0.25 + 5.0 / 3.0) / 0.5);
    CHECK(rhat(d, 0) == Approx(expected).epsilon(1e-12));
  }
  SECTION("preconditions") {
    const DrawsMatrix one = matrix_from_chains({{1, 2, 3, 4}});
    CHECK_THROWS_AS(rhat(one, 0), std::invalid_argument);
    const DrawsMatrix tiny = matrix_from_chains({{1, 2}, {1, 2}});
    CHECK_THROWS_AS(rhat(tiny, 0), std::invalid_argument);
  }
}

TEST_CASE("effective sample size tracks autocorrelation", "[sampler]") {
  SECTION("independent draws") {
    Rng rng(3);
    std::vector<double> x(20000);
    for (auto& v : x) v = rng.normal();
    const DrawsMatrix d = matrix_from_chains({x});
    CHECK(ess(d, 0) == Approx(20000.0).epsilon(0.15));
  }
  SECTION("constant chains have zero effective draws") {
    const DrawsMatrix d = matrix_from_chains({std::vector<double>(100, 2.5)});
    CHECK(ess(d, 0) == 0.0);
  }
  SECTION("AR(1) chain matches the analytic factor") {
    Rng rng(4);
    const double phi = 0.9;
    const int N = 40000;
    std::vector<double> x(static_cast<std::size_t>(N));
    x[0] = rng.normal();
    for (int i = 1; i < N; ++i)
      x[static_cast<std::size_t>(i)] =
          phi * x[static_cast<std::size_t>(i - 1)] + std::sqrt(1 - phi * phi) * rng.normal();
    const DrawsMatrix d = matrix_from_chains({x});
    const double expected = N * (1 - phi) / (1 + phi);
    CHECK(ess(d, 0) == Approx(expected).epsilon(0.25));
  }
}

TEST_CASE("summaries expose the documented columns", "[sampler]") {
  SECTION("constant column") {
    const DrawsMatrix d = matrix_from_chains({std::vector<double>(50, 3.0),
                                              std::vector<double>(50, 3.0)});
    const std::vector<SummaryRow> rows = summarize(d);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].mean == Approx(3.0));
    CHECK(rows[0].sd == Approx(0.0));
    CHECK(rows[0].q025 == Approx(3.0));
    CHECK(rows[0].q50 == Approx(3.0));
    CHECK(rows[0].q975 == Approx(3.0));
    CHECK(rows[0].ess == 0.0);
  }
  SECTION("median of 1..100 interpolates to 50.5") {
    std::vector<double> x(100);
    for (int i = 0; i < 100; ++i) x[static_cast<std::size_t>(i)] = i + 1;
    const DrawsMatrix d = matrix_from_chains({x});
    CHECK(summarize(d)[0].q50 == Approx(50.5));
  }
  SECTION("rows keep column order") {
    DrawsMatrix d;
    d.n_chains = 1;
    d.n_draws = 4;
    d.n_cols = 2;
    d.names = {"b", "a"};
    d.data = {1, 10, 2, 20, 3, 30, 4, 40};
    d.divergent.assign(4, 0);
    const std::vector<SummaryRow> rows = summarize(d);
    CHECK(rows[0].name == "b");
    CHECK(rows[1].name == "a");
    CHECK(rows[1].mean == Approx(25.0));
  }
}

TEST_CASE("draws CSV round trips through the reader", "[sampler]") {
  StdNormal target(2);
  SamplerConfig cfg;
  cfg.chains = 2;
  cfg.iterations = 100;
  cfg.warmup = 50;
  cfg.seed = 12;
  const SampleResult res = sample(target, cfg);
  const auto path = std::filesystem::temp_directory_path() / "mp2_draws_roundtrip.csv";
  write_draws_csv(res.draws, path, {"test provenance line"});
  const DrawsMatrix back = read_draws_csv(path);
  CHECK(back.n_chains == res.draws.n_chains);
  CHECK(back.n_draws == res.draws.n_draws);
  CHECK(back.names == res.draws.names);
  CHECK(back.data == res.draws.data);  // %.17g preserves doubles exactly
}

TEST_CASE("initialization failures surface after 100 retries", "[sampler]") {
  struct Hostile final : LogDensity {
    std::size_t dim() const override { return 1; }
    double log_prob_grad(std::span<const double>, std::span<double> g) const override {
      g[0] = 0.0;
      return kNegInf;
    }
  };
  Hostile target;
  SamplerConfig cfg;
  cfg.chains = 1;
  cfg.iterations = 10;
  cfg.warmup = 5;
  cfg.seed = 3;
  CHECK_THROWS_AS(sample(target, cfg), std::runtime_error);
}
