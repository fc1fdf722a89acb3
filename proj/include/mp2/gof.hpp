#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "mp2/math.hpp"
#include "mp2/network.hpp"

namespace mp2 {

// Missing cells are excluded wherever a statistic would read them; for
// posterior predictive comparisons the observed missingness mask is applied
// to the simulated networks first, so both sides use the same cells.

// Proportion of observed off-diagonal cells that hold a tie.
inline double density(const MultiplexNetwork& net, int t) {
  int ties = 0;
  int cells = 0;
  for (int i = 0; i < net.n(); ++i)
    for (int j = 0; j < net.n(); ++j) {
      if (i == j) continue;
      const std::int8_t v = net(i, j, t);
      if (v == kMissing) continue;
      ++cells;
      ties += v;
    }
  return cells == 0 ? 0.0 : static_cast<double>(ties) / cells;
}

// Proportion of ties whose reverse tie is also present. Ties with an
// unobserved reverse cell are dropped from numerator and denominator.
inline double reciprocity(const MultiplexNetwork& net, int t) {
  int ties = 0;
  int mutual = 0;
  for (int i = 0; i < net.n(); ++i)
    for (int j = 0; j < net.n(); ++j) {
      if (i == j || net(i, j, t) != 1) continue;
      const std::int8_t back = net(j, i, t);
      if (back == kMissing) continue;
      ++ties;
      mutual += back;
    }
  if (ties == 0) {
    warn("reciprocity undefined on a tie-less layer; returning 0");
    return 0.0;
  }
  return static_cast<double>(mutual) / ties;
}

// Global closed-two-path ratio: of all directed two-paths i -> j -> k
// (i != k), the fraction closed by i -> k.
inline double transitivity(const MultiplexNetwork& net, int t) {
  long two_paths = 0;
  long closed = 0;
  const int n = net.n();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j || net(i, j, t) != 1) continue;
      for (int k = 0; k < n; ++k) {
        if (k == i || k == j || net(j, k, t) != 1) continue;
        const std::int8_t close = net(i, k, t);
        if (close == kMissing) continue;
        ++two_paths;
        closed += close;
      }
    }
  if (two_paths == 0) {
    warn("transitivity undefined without two-paths; returning 0");
    return 0.0;
  }
  return static_cast<double>(closed) / two_paths;
}

struct DegreeSequences {
  std::vector<int> indegree, outdegree;
};

// Row/column sums; missing counted as 0.
inline DegreeSequences degree_sequences(const MultiplexNetwork& net, int t) {
  DegreeSequences d;
  d.indegree.assign(static_cast<std::size_t>(net.n()), 0);
  d.outdegree.assign(static_cast<std::size_t>(net.n()), 0);
  for (int i = 0; i < net.n(); ++i)
    for (int j = 0; j < net.n(); ++j)
      if (i != j && net(i, j, t) == 1) {
        ++d.outdegree[static_cast<std::size_t>(i)];
        ++d.indegree[static_cast<std::size_t>(j)];
      }
  return d;
}

inline const std::array<std::string, 16>& triad_labels() {
  static const std::array<std::string, 16> labels = {
      "003", "012", "102", "021D", "021U", "021C", "111D", "111U",
      "030T", "030C", "201", "120D", "120U", "120C", "210", "300"};
  return labels;
}

// Classify one triple by its dyad composition (mutual/asymmetric/null
// counts) and the orientation pattern of the asymmetric edges. The test
// suite checks this decision tree against permutation-isomorphism matching.
inline int classify_triad(const std::array<std::array<bool, 3>, 3>& m) {
  struct Dyad {
    int x, y;
    bool xy, yx;
  };
  const std::array<Dyad, 3> dyads = {Dyad{0, 1, m[0][1], m[1][0]},
                                     Dyad{0, 2, m[0][2], m[2][0]},
                                     Dyad{1, 2, m[1][2], m[2][1]}};
  int mutual = 0, asym = 0, null_d = 0;
  for (const auto& d : dyads) {
    if (d.xy && d.yx)
      ++mutual;
    else if (d.xy || d.yx)
      ++asym;
    else
      ++null_d;
  }
  // directed asymmetric edges as (source, target)
  std::vector<std::pair<int, int>> edges;
  int mutual_a = -1, mutual_b = -1;
  for (const auto& d : dyads) {
    if (d.xy && d.yx) {
      mutual_a = d.x;
      mutual_b = d.y;
    } else if (d.xy) {
      edges.emplace_back(d.x, d.y);
    } else if (d.yx) {
      edges.emplace_back(d.y, d.x);
    }
  }
  if (mutual == 0 && asym == 0) return 0;   // 003
  if (mutual == 0 && asym == 1) return 1;   // 012
  if (mutual == 1 && asym == 0) return 2;   // 102
  if (mutual == 0 && asym == 2) {
    if (edges[0].first == edges[1].first) return 3;    // 021D (shared source)
    if (edges[0].second == edges[1].second) return 4;  // 021U (shared target)
    return 5;                                          // 021C (path)
  }
  if (mutual == 1 && asym == 1) {
    const auto [src, dst] = edges[0];
    const bool into_mutual = (dst == mutual_a || dst == mutual_b);
    return into_mutual ? 6 : 7;  // 111D / 111U
  }
  if (mutual == 0 && asym == 3) {
    int outdeg[3] = {0, 0, 0};
    for (const auto& [src, dst] : edges) ++outdeg[src];
    const bool cycle = outdeg[0] == 1 && outdeg[1] == 1 && outdeg[2] == 1;
    return cycle ? 9 : 8;  // 030C / 030T
  }
  if (mutual == 2 && asym == 0) return 10;  // 201
  if (mutual == 1 && asym == 2) {
    if (edges[0].first == edges[1].first) return 11;    // 120D
    if (edges[0].second == edges[1].second) return 12;  // 120U
    return 13;                                          // 120C
  }
  if (mutual == 2 && asym == 1) return 14;  // 210
  return 15;                                // 300
}

// Counts over all C(n,3) actor triples, in the standard 16-type order
// 003 ... 300. Missing cells count as no tie.
inline std::array<long, 16> triad_census(const MultiplexNetwork& net, int t) {
  if (net.n() < 3) throw ValidationError("triad census needs at least 3 actors");
  std::array<long, 16> counts{};
  const int n = net.n();
  std::array<std::array<bool, 3>, 3> m{};
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      for (int c = b + 1; c < n; ++c) {
        const int ids[3] = {a, b, c};
        for (int x = 0; x < 3; ++x)
          for (int y = 0; y < 3; ++y)
            m[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] =
                x != y && net(ids[x], ids[y], t) == 1;
        ++counts[static_cast<std::size_t>(classify_triad(m))];
      }
  return counts;
}

// Intersection over union of the directed edge sets of two layers; 1 (with a
// warning) when both are empty, so batches stay comparable.
inline double jaccard(const MultiplexNetwork& net, int t, int s) {
  long inter = 0, uni = 0;
  for (int i = 0; i < net.n(); ++i)
    for (int j = 0; j < net.n(); ++j) {
      if (i == j) continue;
      const bool a = net(i, j, t) == 1;
      const bool b = net(i, j, s) == 1;
      inter += a && b;
      uni += a || b;
    }
  if (uni == 0) {
    warn("jaccard undefined on two empty layers; returning 1");
    return 1.0;
  }
  return static_cast<double>(inter) / uni;
}

// Jaccard of layer t with the transpose of layer s: ties i -> j in t matched
// with ties j -> i in s.
inline double cross_reciprocity_jaccard(const MultiplexNetwork& net, int t, int s) {
  long inter = 0, uni = 0;
  for (int i = 0; i < net.n(); ++i)
    for (int j = 0; j < net.n(); ++j) {
      if (i == j) continue;
      const bool a = net(i, j, t) == 1;
      const bool b = net(j, i, s) == 1;
      inter += a && b;
      uni += a || b;
    }
  if (uni == 0) {
    warn("cross-layer reciprocity jaccard undefined on empty layers; returning 1");
    return 1.0;
  }
  return static_cast<double>(inter) / uni;
}

// Pearson correlations of the 2T per-actor degree sequences, ordered
// out[1], in[1], out[2], in[2], ... Zero-variance sequences yield NaN.
inline std::vector<double> degree_correlations(const MultiplexNetwork& net) {
  const int T = net.layer_count();
  const int K = 2 * T;
  std::vector<std::vector<double>> seqs(static_cast<std::size_t>(K));
  for (int t = 0; t < T; ++t) {
    const DegreeSequences d = degree_sequences(net, t);
    auto& out_seq = seqs[static_cast<std::size_t>(2 * t)];
    auto& in_seq = seqs[static_cast<std::size_t>(2 * t + 1)];
    for (int i = 0; i < net.n(); ++i) {
      out_seq.push_back(d.outdegree[static_cast<std::size_t>(i)]);
      in_seq.push_back(d.indegree[static_cast<std::size_t>(i)]);
    }
  }
  std::vector<double> cor(static_cast<std::size_t>(K) * K,
                          std::numeric_limits<double>::quiet_NaN());
  for (int a = 0; a < K; ++a)
    for (int b = 0; b < K; ++b) {
      if (sample_variance(seqs[static_cast<std::size_t>(a)]) == 0.0 ||
          sample_variance(seqs[static_cast<std::size_t>(b)]) == 0.0)
        continue;
      cor[static_cast<std::size_t>(a) * K + b] =
          a == b ? 1.0
                 : pearson_correlation(seqs[static_cast<std::size_t>(a)],
                                       seqs[static_cast<std::size_t>(b)]);
    }
  return cor;
}

inline std::string degree_axis_name(int k) {
  return (k % 2 == 0 ? "out" : "in") + std::to_string(k / 2 + 1);
}

// ---------------------------------------------------------------------------
// Posterior predictive report
// ---------------------------------------------------------------------------

enum class GofStatistic {
  density,
  reciprocity,
  transitivity,
  degree_distribution,
  triad_census,
  jaccard,
  cross_reciprocity,
  degree_correlation,
};

inline std::set<GofStatistic> all_gof_statistics() {
  return {GofStatistic::density,       GofStatistic::reciprocity,
          GofStatistic::transitivity,  GofStatistic::degree_distribution,
          GofStatistic::triad_census,  GofStatistic::jaccard,
          GofStatistic::cross_reciprocity, GofStatistic::degree_correlation};
}

struct GofEntry {
  std::string stat;
  double observed = 0.0;
  double sim_mean = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  double quantile_pos = 0.0;  // position of the observed value in the simulated distribution
  std::vector<double> sims;
};

struct GofReport {
  int n_sim = 0;
  std::vector<GofEntry> entries;
};

namespace detail {

inline MultiplexNetwork apply_missing_mask(const MultiplexNetwork& sim,
                                           const MultiplexNetwork& observed) {
  MultiplexNetwork out = sim;
  for (int t = 0; t < observed.layer_count(); ++t)
    for (int i = 0; i < observed.n(); ++i)
      for (int j = 0; j < observed.n(); ++j)
        if (i != j && observed(i, j, t) == kMissing) out.set(i, j, t, kMissing);
  return out;
}

inline GofEntry make_entry(std::string name, double observed, std::vector<double> sims) {
  GofEntry e;
  e.stat = std::move(name);
  e.observed = observed;
  e.sims = std::move(sims);
  std::vector<double> defined;
  for (double v : e.sims)
    if (!std::isnan(v)) defined.push_back(v);
  if (defined.empty() || std::isnan(observed)) {
    e.sim_mean = e.q025 = e.q50 = e.q975 = std::numeric_limits<double>::quiet_NaN();
    e.quantile_pos = std::numeric_limits<double>::quiet_NaN();
    return e;
  }
  e.sim_mean = mean(defined);
  std::sort(defined.begin(), defined.end());
  e.q025 = quantile_sorted(defined, 0.025);
  e.q50 = quantile_sorted(defined, 0.5);
  e.q975 = quantile_sorted(defined, 0.975);
  long less = 0, equal = 0;
  for (double v : defined) {
    less += v < observed;
    equal += v == observed;
  }
  e.quantile_pos = (less + 0.5 * equal) / static_cast<double>(defined.size());
  return e;
}

}  // namespace detail

inline GofReport ppc_report(const MultiplexNetwork& observed,
                            const std::vector<MultiplexNetwork>& batch,
                            const std::set<GofStatistic>& selection = all_gof_statistics()) {
  if (batch.empty()) throw ValidationError("posterior predictive report needs simulations");
  for (const auto& net : batch)
    if (net.n() != observed.n() || net.layer_count() != observed.layer_count())
      throw ValidationError("simulated network shape does not match the observed network");
  const int T = observed.layer_count();
  const int n = observed.n();
  const int S = static_cast<int>(batch.size());

  std::vector<MultiplexNetwork> sims;
  sims.reserve(batch.size());
  const bool masked = observed.has_missing();
  for (const auto& net : batch)
    sims.push_back(masked ? detail::apply_missing_mask(net, observed) : net);

  GofReport report;
  report.n_sim = S;
  auto layer_tag = [](int t) { return "[" + std::to_string(t + 1) + "]"; };
  auto pair_tag = [](int t, int s) {
    return "[" + std::to_string(t + 1) + "," + std::to_string(s + 1) + "]";
  };
  auto add_scalar = [&](const std::string& name, auto&& fn) {
    std::vector<double> vals;
    vals.reserve(sims.size());
    for (const auto& net : sims) vals.push_back(fn(net));
    report.entries.push_back(detail::make_entry(name, fn(observed), std::move(vals)));
  };

  for (int t = 0; t < T; ++t) {
    if (selection.count(GofStatistic::density))
      add_scalar("density" + layer_tag(t), [t](const MultiplexNetwork& x) { return density(x, t); });
    if (selection.count(GofStatistic::reciprocity))
      add_scalar("reciprocity" + layer_tag(t),
                 [t](const MultiplexNetwork& x) { return reciprocity(x, t); });
    if (selection.count(GofStatistic::transitivity))
      add_scalar("transitivity" + layer_tag(t),
                 [t](const MultiplexNetwork& x) { return transitivity(x, t); });
  }
  if (selection.count(GofStatistic::degree_distribution)) {
    for (int t = 0; t < T; ++t) {
      // counts of actors at each degree value, per layer and direction
      std::vector<DegreeSequences> sim_deg;
      sim_deg.reserve(sims.size());
      for (const auto& net : sims) sim_deg.push_back(degree_sequences(net, t));
      const DegreeSequences obs_deg = degree_sequences(observed, t);
      for (int which = 0; which < 2; ++which) {
        const char* base = which == 0 ? "indegree_dist" : "outdegree_dist";
        for (int d = 0; d < n; ++d) {
          auto count_at = [&](const DegreeSequences& seq) {
            const auto& v = which == 0 ? seq.indegree : seq.outdegree;
            return static_cast<double>(std::count(v.begin(), v.end(), d));
          };
          std::vector<double> vals;
          vals.reserve(sims.size());
          for (const auto& sd : sim_deg) vals.push_back(count_at(sd));
          report.entries.push_back(detail::make_entry(
              base + layer_tag(t) + "[" + std::to_string(d) + "]", count_at(obs_deg),
              std::move(vals)));
        }
      }
    }
  }
  if (selection.count(GofStatistic::triad_census) && n >= 3) {
    for (int t = 0; t < T; ++t) {
      std::vector<std::array<long, 16>> sim_census;
      sim_census.reserve(sims.size());
      for (const auto& net : sims) sim_census.push_back(triad_census(net, t));
      const std::array<long, 16> obs_census = triad_census(observed, t);
      for (int c = 0; c < 16; ++c) {
        std::vector<double> vals;
        vals.reserve(sims.size());
        for (const auto& sc : sim_census) vals.push_back(static_cast<double>(sc[static_cast<std::size_t>(c)]));
        report.entries.push_back(detail::make_entry(
            "triad_census" + layer_tag(t) + "[" + triad_labels()[static_cast<std::size_t>(c)] + "]",
            static_cast<double>(obs_census[static_cast<std::size_t>(c)]), std::move(vals)));
      }
    }
  }
  for (int t = 0; t < T; ++t)
    for (int s = t + 1; s < T; ++s) {
      if (selection.count(GofStatistic::jaccard))
        add_scalar("jaccard" + pair_tag(t, s),
                   [t, s](const MultiplexNetwork& x) { return jaccard(x, t, s); });
      if (selection.count(GofStatistic::cross_reciprocity))
        add_scalar("cross_reciprocity" + pair_tag(t, s), [t, s](const MultiplexNetwork& x) {
          return cross_reciprocity_jaccard(x, t, s);
        });
    }
  if (selection.count(GofStatistic::degree_correlation)) {
    const int K = 2 * T;
    std::vector<std::vector<double>> sim_cor;
    sim_cor.reserve(sims.size());
    for (const auto& net : sims) sim_cor.push_back(degree_correlations(net));
    const std::vector<double> obs_cor = degree_correlations(observed);
    for (int a = 0; a < K; ++a)
      for (int b = a + 1; b < K; ++b) {
        std::vector<double> vals;
        vals.reserve(sims.size());
        for (const auto& sc : sim_cor) vals.push_back(sc[static_cast<std::size_t>(a) * K + b]);
        report.entries.push_back(detail::make_entry(
            "degree_cor[" + degree_axis_name(a) + "," + degree_axis_name(b) + "]",
            obs_cor[static_cast<std::size_t>(a) * K + b], std::move(vals)));
      }
  }
  return report;
}

inline json gof_report_to_json(const GofReport& report) {
  json doc;
  doc["n_sim"] = report.n_sim;
  json entries = json::array();
  for (const auto& e : report.entries) {
    json item;
    item["statistic"] = e.stat;
    auto put = [&item](const char* key, double v) {
      if (std::isnan(v))
        item[key] = nullptr;
      else
        item[key] = v;
    };
    put("observed", e.observed);
    put("sim_mean", e.sim_mean);
    put("q025", e.q025);
    put("q50", e.q50);
    put("q975", e.q975);
    put("quantile_position", e.quantile_pos);
    entries.push_back(std::move(item));
  }
  doc["entries"] = std::move(entries);
  return doc;
}

// Tidy long format for external plotting: statistic, source, replicate, value.
inline void write_gof_tidy_csv(const GofReport& report, const std::filesystem::path& path,
                               const std::vector<std::string>& provenance = {}) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  for (const auto& line : provenance) out << "# " << line << '\n';
  out << "statistic,source,replicate,value\n";
  char buf[64];
  auto fmt = [&buf](double v) {
    if (std::isnan(v)) return std::string("NA");
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& e : report.entries) {
    out << csv_field(e.stat) << ",observed,0," << fmt(e.observed) << '\n';
    for (std::size_t r = 0; r < e.sims.size(); ++r)
      out << csv_field(e.stat) << ",sim," << (r + 1) << ',' << fmt(e.sims[r]) << '\n';
  }
}

}  // namespace mp2
