#include <catch2/catch.hpp>

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <filesystem>

#include "mp2/gof.hpp"
#include "mp2/rng.hpp"
#include "mp2/simulate.hpp"
#include "oracles.hpp"

using namespace mp2;

namespace {

MultiplexNetwork from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
  MultiplexNetwork net(n, 1);
  for (const auto& [i, j] : edges) net.set(i, j, 0, 1);
  return net;
}

MultiplexNetwork random_layer(int n, double p, std::uint64_t seed) {
  MultiplexNetwork net(n, 1);
  Rng rng(seed);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) net.set(i, j, 0, rng.uniform() < p ? 1 : 0);
  return net;
}

}  // namespace

TEST_CASE("density counts observed cells", "[gof]") {
  MultiplexNetwork complete(3, 1);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) complete.set(i, j, 0, 1);
  CHECK(density(complete, 0) == Approx(1.0));
  CHECK(density(from_edges(3, {{0, 1}}), 0) == Approx(1.0 / 6.0));
  CHECK(density(MultiplexNetwork(3, 1), 0) == Approx(0.0));
  // missing cells drop out of numerator and denominator
  MultiplexNetwork partial = from_edges(3, {{0, 1}});
  partial.set(1, 0, 0, kMissing);
  partial.set(2, 0, 0, kMissing);
  CHECK(density(partial, 0) == Approx(0.25));
}

TEST_CASE("reciprocity is the reciprocated-tie fraction", "[gof]") {
  CHECK(reciprocity(from_edges(3, {{0, 1}, {1, 0}, {0, 2}}), 0) == Approx(2.0 / 3.0));
  CHECK(reciprocity(from_edges(3, {{0, 1}, {1, 0}, {0, 2}, {2, 0}, {1, 2}, {2, 1}}), 0) ==
        Approx(1.0));
  // tournament: every dyad one-directional
  CHECK(reciprocity(from_edges(3, {{0, 1}, {1, 2}, {0, 2}}), 0) == Approx(0.0));
  CHECK(reciprocity(MultiplexNetwork(4, 1), 0) == Approx(0.0));  // warned, defined as 0
}

TEST_CASE("transitivity is the closed-two-path ratio", "[gof]") {
  MultiplexNetwork triangle(3, 1);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) triangle.set(i, j, 0, 1);
  CHECK(transitivity(triangle, 0) == Approx(1.0));
  CHECK(transitivity(from_edges(3, {{0, 1}, {1, 2}}), 0) == Approx(0.0));
  CHECK(transitivity(from_edges(3, {{0, 1}, {1, 2}, {0, 2}}), 0) == Approx(1.0));
  CHECK(transitivity(MultiplexNetwork(3, 1), 0) == Approx(0.0));  // no two-paths
}

TEST_CASE("degree sequences satisfy the handshake identity", "[gof]") {
  SECTION("star graph") {
    const MultiplexNetwork star = from_edges(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}});
    const DegreeSequences d = degree_sequences(star, 0);
    CHECK(d.outdegree[0] == 4);
    for (int i = 1; i < 5; ++i) {
      CHECK(d.indegree[static_cast<std::size_t>(i)] == 1);
      CHECK(d.outdegree[static_cast<std::size_t>(i)] == 0);
    }
  }
  SECTION("empty graph") {
    const DegreeSequences d = degree_sequences(MultiplexNetwork(4, 1), 0);
    for (int v : d.indegree) CHECK(v == 0);
    for (int v : d.outdegree) CHECK(v == 0);
  }
  SECTION("random layers") {
    for (int rep = 0; rep < 10; ++rep) {
      const MultiplexNetwork net = random_layer(7, 0.4, 100 + rep);
      const DegreeSequences d = degree_sequences(net, 0);
      const int in_total = std::accumulate(d.indegree.begin(), d.indegree.end(), 0);
      const int out_total = std::accumulate(d.outdegree.begin(), d.outdegree.end(), 0);
      CHECK(in_total == out_total);
      CHECK(in_total == net.tie_count(0));
    }
  }
}

TEST_CASE("triad census matches the isomorphism oracle", "[gof]") {
  SECTION("empty and complete graphs") {
    std::array<long, 16> empty_census = triad_census(MultiplexNetwork(5, 1), 0);
    CHECK(empty_census[0] == 10);
    CHECK(std::accumulate(empty_census.begin(), empty_census.end(), 0L) == 10);
    MultiplexNetwork complete(3, 1);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (i != j) complete.set(i, j, 0, 1);
    std::array<long, 16> complete_census = triad_census(complete, 0);
    CHECK(complete_census[15] == 1);
  }
  SECTION("random layers, all triples classified by isomorphism") {
    for (int rep = 0; rep < 50; ++rep) {
      const int n = 3 + static_cast<int>(rep % 6);
      const MultiplexNetwork net = random_layer(n, 0.15 + 0.1 * (rep % 7), 999 + rep);
      std::array<long, 16> expected{};
      for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
          for (int c = b + 1; c < n; ++c) {
            std::array<std::array<bool, 3>, 3> m{};
            const int ids[3] = {a, b, c};
            for (int x = 0; x < 3; ++x)
              for (int y = 0; y < 3; ++y)
                if (x != y)
                  m[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] =
                      net(ids[x], ids[y], 0) == 1;
            ++expected[static_cast<std::size_t>(oracle::classify_triad_iso(m))];
          }
      const std::array<long, 16> got = triad_census(net, 0);
      CHECK(got == expected);
      CHECK(std::accumulate(got.begin(), got.end(), 0L) ==
            static_cast<long>(n) * (n - 1) * (n - 2) / 6);
    }
  }
  SECTION("small networks are rejected") {
    CHECK_THROWS_AS(triad_census(MultiplexNetwork(2, 1), 0), ValidationError);
  }
}

TEST_CASE("jaccard overlap follows set arithmetic", "[gof]") {
  MultiplexNetwork net(4, 2);
  auto set_edges = [&net](int t, const std::vector<std::pair<int, int>>& edges) {
    for (const auto& [i, j] : edges) net.set(i, j, t, 1);
  };
  SECTION("identical layers") {
    set_edges(0, {{0, 1}, {2, 3}});
    set_edges(1, {{0, 1}, {2, 3}});
    CHECK(jaccard(net, 0, 1) == Approx(1.0));
  }
  SECTION("disjoint layers") {
    set_edges(0, {{0, 1}});
    set_edges(1, {{2, 3}});
    CHECK(jaccard(net, 0, 1) == Approx(0.0));
  }
  SECTION("hand-counted overlap") {
    set_edges(0, {{0, 1}, {1, 2}, {2, 0}});
    set_edges(1, {{0, 1}});
    CHECK(jaccard(net, 0, 1) == Approx(1.0 / 3.0));
  }
  SECTION("empty union defined as one") {
    CHECK(jaccard(net, 0, 1) == Approx(1.0));
  }
  SECTION("symmetry and equality property on random layers") {
    Rng rng(55);
    for (int rep = 0; rep < 20; ++rep) {
      MultiplexNetwork r(5, 2);
      for (int t = 0; t < 2; ++t)
        for (int i = 0; i < 5; ++i)
          for (int j = 0; j < 5; ++j)
            if (i != j) r.set(i, j, t, rng.uniform() < 0.3 ? 1 : 0);
      CHECK(jaccard(r, 0, 1) == Approx(jaccard(r, 1, 0)));
      // oracle: explicit sets
      std::set<std::pair<int, int>> e0, e1;
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
          if (i != j) {
            if (r(i, j, 0) == 1) e0.insert({i, j});
            if (r(i, j, 1) == 1) e1.insert({i, j});
          }
      std::vector<std::pair<int, int>> inter;
      std::set_intersection(e0.begin(), e0.end(), e1.begin(), e1.end(),
                            std::back_inserter(inter));
      std::set<std::pair<int, int>> uni = e0;
      uni.insert(e1.begin(), e1.end());
      const double expected = uni.empty() ? 1.0 : static_cast<double>(inter.size()) / uni.size();
      CHECK(jaccard(r, 0, 1) == Approx(expected));
      CHECK((jaccard(r, 0, 1) == 1.0) == (e0 == e1 && !uni.empty()));
    }
  }
}

TEST_CASE("cross-layer reciprocity matches the transposed overlap", "[gof]") {
  MultiplexNetwork net(4, 2);
  SECTION("layer two transposes layer one") {
    net.set(0, 1, 0, 1);
    net.set(2, 3, 0, 1);
    net.set(1, 0, 1, 1);
    net.set(3, 2, 1, 1);
    CHECK(cross_reciprocity_jaccard(net, 0, 1) == Approx(1.0));
  }
  SECTION("single mutual cross-pair") {
    net.set(0, 1, 0, 1);
    net.set(1, 0, 1, 1);
    CHECK(cross_reciprocity_jaccard(net, 0, 1) == Approx(1.0));
  }
  SECTION("aligned ties are not cross-reciprocated") {
    net.set(0, 1, 0, 1);
    net.set(0, 1, 1, 1);
    CHECK(cross_reciprocity_jaccard(net, 0, 1) == Approx(0.0));
  }
}

TEST_CASE("degree correlations use the per-actor sequences", "[gof]") {
  SECTION("duplicated layer correlates perfectly") {
    MultiplexNetwork net(5, 2);
    Rng rng(8);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j)
        if (i != j) {
          const int v = rng.uniform() < 0.4 ? 1 : 0;
          net.set(i, j, 0, static_cast<std::int8_t>(v));
          net.set(i, j, 1, static_cast<std::int8_t>(v));
        }
    const std::vector<double> cor = degree_correlations(net);
    const int K = 4;
    // out-degree of layer 1 vs out-degree of layer 2
    CHECK(cor[0 * K + 2] == Approx(1.0));
    CHECK(cor[1 * K + 3] == Approx(1.0));
    for (int k = 0; k < K; ++k) CHECK(cor[k * K + k] == Approx(1.0));
  }
  SECTION("hand-computed four-actor example") {
    const MultiplexNetwork net = from_edges(4, {{0, 1}, {0, 2}, {1, 2}, {3, 0}});
    const DegreeSequences d = degree_sequences(net, 0);
    std::vector<double> outs(d.outdegree.begin(), d.outdegree.end());
    std::vector<double> ins(d.indegree.begin(), d.indegree.end());
    const std::vector<double> cor = degree_correlations(net);
    CHECK(cor[0 * 2 + 1] == Approx(pearson_correlation(outs, ins)));
  }
  SECTION("zero-variance sequences are flagged undefined") {
    const std::vector<double> cor = degree_correlations(MultiplexNetwork(4, 1));
    CHECK(std::isnan(cor[1]));
    CHECK(std::isnan(cor[0]));  // degenerate diagonal flagged too
  }
}

TEST_CASE("posterior predictive report positions the observed statistics", "[gof]") {
  const ModelContext ctx(ModelSpec::plain(2), CovariateSet(6), 6);
  Rng rng(31);
  const ParameterState s = draw_prior(ctx, rng);
  const MultiplexNetwork observed = simulate_network(ctx, s, rng);
  SECTION("perfect fit: batch of observed copies") {
    const std::vector<MultiplexNetwork> batch(20, observed);
    const GofReport report = ppc_report(observed, batch);
    for (const auto& e : report.entries) {
      if (std::isnan(e.observed)) continue;
      CHECK(e.quantile_pos == Approx(0.5));
      CHECK(e.sim_mean == Approx(e.observed));
    }
  }
  SECTION("an out-of-range statistic lands at the boundary") {
    MultiplexNetwork empty(6, 2);
    const SimBatch batch = simulate_prior_batch(ctx, 15, 5);
    const GofReport report = ppc_report(empty, batch.networks);
    for (const auto& e : report.entries)
      if (e.stat == "density[1]") {
        CHECK(e.observed == 0.0);
        CHECK(e.quantile_pos <= 0.05);
      }
  }
  SECTION("full statistic selection runs and covers every family once") {
    const SimBatch batch = simulate_prior_batch(ctx, 10, 6);
    const GofReport report = ppc_report(observed, batch.networks);
    std::set<std::string> names;
    for (const auto& e : report.entries) {
      CHECK(names.insert(e.stat).second);  // each statistic appears exactly once
      if (!std::isnan(e.quantile_pos)) {
        CHECK(e.quantile_pos >= 0.0);
        CHECK(e.quantile_pos <= 1.0);
      }
    }
    CHECK(names.count("density[1]") == 1);
    CHECK(names.count("reciprocity[2]") == 1);
    CHECK(names.count("transitivity[1]") == 1);
    CHECK(names.count("jaccard[1,2]") == 1);
    CHECK(names.count("cross_reciprocity[1,2]") == 1);
    CHECK(names.count("triad_census[1][030T]") == 1);
    CHECK(names.count("indegree_dist[2][0]") == 1);
    CHECK(names.count("degree_cor[out1,in1]") == 1);
  }
  SECTION("shape mismatches are rejected") {
    const std::vector<MultiplexNetwork> wrong(3, MultiplexNetwork(5, 2));
    CHECK_THROWS_AS(ppc_report(observed, wrong), ValidationError);
    CHECK_THROWS_AS(ppc_report(observed, {}), ValidationError);
  }
}

TEST_CASE("observed missingness masks the simulated networks", "[gof]") {
  MultiplexNetwork observed(4, 1);
  observed.set(0, 1, 0, 1);
  observed.set(1, 0, 0, kMissing);
  observed.set(2, 3, 0, kMissing);
  MultiplexNetwork sim(4, 1);
  sim.set(1, 0, 0, 1);  // falls in the masked cell
  sim.set(2, 3, 0, 1);  // masked too
  sim.set(0, 1, 0, 1);
  const GofReport report = ppc_report(observed, {sim}, {GofStatistic::density});
  // both sides see 1 tie over the same 10 observed cells
  CHECK(report.entries[0].observed == Approx(0.1));
  CHECK(report.entries[0].sim_mean == Approx(0.1));
}

TEST_CASE("report serialization round trips", "[gof]") {
  const ModelContext ctx(ModelSpec::plain(1), CovariateSet(4), 4);
  const SimBatch batch = simulate_prior_batch(ctx, 5, 17);
  const GofReport report =
      ppc_report(batch.networks[0], {batch.networks.begin() + 1, batch.networks.end()});
  const json doc = gof_report_to_json(report);
  CHECK(doc["n_sim"] == 4);
  CHECK(doc["entries"].size() == report.entries.size());
  const auto path = std::filesystem::temp_directory_path() / "mp2_gof_tidy.csv";
  write_gof_tidy_csv(report, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "statistic,source,replicate,value");
}
