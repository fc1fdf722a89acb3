#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "mp2/model.hpp"
#include "mp2/posterior.hpp"
#include "mp2/rng.hpp"
#include "mp2/sampler.hpp"

namespace mp2 {

enum class Provenance { prior, posterior, fixed };

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::prior: return "prior";
    case Provenance::posterior: return "posterior";
    case Provenance::fixed: return "fixed";
  }
  return "fixed";
}

struct SimBatch {
  std::vector<MultiplexNetwork> networks;
  std::vector<ParameterState> parameter_draws;
  Provenance provenance = Provenance::fixed;
};

// One draw from the joint prior: Normal baselines and coefficients,
// InverseGamma scales, LKJ correlation (sampled through its independent
// scaled-Beta partial correlations), standard normal actor latents.
inline ParameterState draw_prior(const ModelContext& ctx, Rng& rng) {
  ParameterState s = ctx.zero_state();
  std::vector<double> fixed(static_cast<std::size_t>(ctx.n_fixed()));
  for (std::size_t f = 0; f < fixed.size(); ++f)
    fixed[f] = rng.normal(0.0, ctx.fixed_prior_sd()[f]);
  ctx.unpack_fixed(fixed, s);
  const PriorConfig& prior = ctx.prior();
  for (auto& sk : s.sigma) sk = rng.inv_gamma(prior.sigma_shape, prior.sigma_scale);
  const int K = ctx.K();
  std::vector<double> pc(static_cast<std::size_t>(K * (K - 1) / 2));
  std::size_t e = 0;
  for (int r = 1; r < K; ++r)
    for (int c = 0; c < r; ++c, ++e) {
      const double b = prior.lkj_eta + 0.5 * (K - c - 2);
      pc[e] = 2.0 * rng.beta(b, b) - 1.0;
    }
  s.chol = chol_from_partial_correlations(pc, K);
  for (auto& z : s.z_actor) z = rng.normal();
  return s;
}

// Exact generation: every dyad outcome is drawn from its full categorical
// distribution over the 2^(2T) joint configurations.
inline MultiplexNetwork simulate_network(const ModelContext& ctx, const ParameterState& s,
                                         Rng& rng) {
  const int n = ctx.n();
  const int T = ctx.T();
  MultiplexNetwork net(n, T, ctx.spec().layers);
  const ActorEffects ae = actor_effects(ctx, s);
  DyadEffects de;
  std::vector<double> eta(static_cast<std::size_t>(ctx.features().F));
  std::vector<double> table(static_cast<std::size_t>(ctx.n_outcomes()));
  for_each_dyad(n, [&](int i, int j) {
    dyad_effects(ctx, s, i, j, de);
    build_eta(ctx, de, ae, i, j, eta);
    dyad_log_prob_table(ctx, eta, table);
    const double u = rng.uniform();
    double cum = 0.0;
    int outcome = ctx.n_outcomes() - 1;  // guards against rounding at the top end
    for (int o = 0; o < ctx.n_outcomes(); ++o) {
      cum += std::exp(table[static_cast<std::size_t>(o)]);
      if (u < cum) {
        outcome = o;
        break;
      }
    }
    for (int t = 0; t < T; ++t) {
      net.set(i, j, t, static_cast<std::int8_t>((outcome >> (2 * t)) & 1));
      net.set(j, i, t, static_cast<std::int8_t>((outcome >> (2 * t + 1)) & 1));
    }
  });
  return net;
}

inline SimBatch simulate_prior_batch(const ModelContext& ctx, int count, std::uint64_t seed,
                                     unsigned threads = 1) {
  SimBatch batch;
  batch.provenance = Provenance::prior;
  batch.networks.assign(static_cast<std::size_t>(count), MultiplexNetwork(ctx.n(), ctx.T(), ctx.spec().layers));
  batch.parameter_draws.assign(static_cast<std::size_t>(count), ParameterState{});
  parallel_for(static_cast<std::size_t>(count), threads, [&](std::size_t i) {
    Rng rng(sub_seed(seed, i));
    batch.parameter_draws[i] = draw_prior(ctx, rng);
    batch.networks[i] = simulate_network(ctx, batch.parameter_draws[i], rng);
  });
  return batch;
}

inline SimBatch simulate_fixed_batch(const ModelContext& ctx, const ParameterState& s, int count,
                                     std::uint64_t seed, unsigned threads = 1) {
  SimBatch batch;
  batch.provenance = Provenance::fixed;
  batch.networks.assign(static_cast<std::size_t>(count), MultiplexNetwork(ctx.n(), ctx.T(), ctx.spec().layers));
  batch.parameter_draws.assign(static_cast<std::size_t>(count), s);
  parallel_for(static_cast<std::size_t>(count), threads, [&](std::size_t i) {
    Rng rng(sub_seed(seed, i));
    batch.networks[i] = simulate_network(ctx, s, rng);
  });
  return batch;
}

// Equally spaced indices over [0, total); count == total selects every index.
inline std::vector<int> thin_indices(int total, int count) {
  std::vector<int> idx(static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j)
    idx[static_cast<std::size_t>(j)] =
        static_cast<int>((static_cast<double>(j) + 0.5) * total / count);
  return idx;
}

// One network per selected posterior draw, with the actor effects taken from
// the draw itself (the C columns), not re-drawn from their population
// distribution.
inline SimBatch posterior_predictive(const ModelContext& ctx, const DrawsMatrix& draws, int count,
                                     std::uint64_t seed, unsigned threads = 1) {
  if (draws.total_draws() == 0) throw ValidationError("posterior_predictive: no draws");
  if (count > draws.total_draws())
    throw ValidationError("posterior_predictive: requested more networks than draws");
  if (static_cast<int>(draws.names.size()) != report_dim(ctx) ||
      draws.names != report_names(ctx))
    throw ValidationError("draws do not match the model's parameter layout");
  const std::vector<int> idx = thin_indices(draws.total_draws(), count);
  SimBatch batch;
  batch.provenance = Provenance::posterior;
  batch.networks.assign(static_cast<std::size_t>(count), MultiplexNetwork(ctx.n(), ctx.T(), ctx.spec().layers));
  batch.parameter_draws.assign(static_cast<std::size_t>(count), ParameterState{});
  parallel_for(static_cast<std::size_t>(count), threads, [&](std::size_t j) {
    const int flat = idx[j];
    const int chain = flat / draws.n_draws;
    const int d = flat % draws.n_draws;
    std::span<const double> row(draws.row(chain, d), static_cast<std::size_t>(draws.n_cols));
    batch.parameter_draws[j] = state_from_report(ctx, row);
    Rng rng(sub_seed(seed, j));
    batch.networks[j] = simulate_network(ctx, batch.parameter_draws[j], rng);
  });
  return batch;
}

// ---------------------------------------------------------------------------
// ParameterState JSON (for fixed-parameter simulation)
// ---------------------------------------------------------------------------

inline json state_to_json(const ModelContext& ctx, const ParameterState& s) {
  json doc;
  auto arr = [](const std::vector<double>& v) { return json(v); };
  auto nested = [](const std::vector<std::vector<double>>& v) {
    json out = json::array();
    for (const auto& inner : v) out.push_back(inner);
    return out;
  };
  doc["mu"] = arr(s.mu);
  doc["rho"] = arr(s.rho);
  doc["mu_cross"] = arr(s.mu_cross);
  doc["rho_cross"] = arr(s.rho_cross);
  doc["delta_mu"] = nested(s.delta_mu);
  doc["delta_rho"] = nested(s.delta_rho);
  doc["delta_mu_cross"] = nested(s.delta_mu_cross);
  doc["delta_rho_cross"] = nested(s.delta_rho_cross);
  doc["gamma_alpha"] = nested(s.gamma_alpha);
  doc["gamma_beta"] = nested(s.gamma_beta);
  doc["sigma"] = arr(s.sigma);
  const int K = ctx.K();
  const std::vector<double> omega = correlation_from_chol(s.chol, K);
  json om = json::array();
  for (int r = 0; r < K; ++r) {
    json row = json::array();
    for (int c = 0; c < K; ++c) row.push_back(omega[static_cast<std::size_t>(r) * K + c]);
    om.push_back(std::move(row));
  }
  doc["omega"] = std::move(om);
  json z = json::array();
  for (int i = 0; i < ctx.n(); ++i) {
    json row = json::array();
    for (int k = 0; k < K; ++k)
      row.push_back(s.z_actor[static_cast<std::size_t>(i) * K + k]);
    z.push_back(std::move(row));
  }
  doc["z_actor"] = std::move(z);
  return doc;
}

// Absent fields keep their neutral defaults (zero effects, unit scales,
// identity correlation, zero latents).
inline ParameterState state_from_json(const ModelContext& ctx, const json& doc) {
  ParameterState s = ctx.zero_state();
  auto fill = [&doc](const char* key, std::vector<double>& v) {
    if (!doc.contains(key)) return;
    const json& arr = doc[key];
    if (arr.size() != v.size())
      throw ValidationError(std::string("parameter field '") + key + "' has wrong length");
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = arr[i].get<double>();
  };
  auto fill_nested = [&doc](const char* key, std::vector<std::vector<double>>& v) {
    if (!doc.contains(key)) return;
    const json& outer = doc[key];
    if (outer.size() != v.size())
      throw ValidationError(std::string("parameter field '") + key + "' has wrong block count");
    for (std::size_t b = 0; b < v.size(); ++b) {
      if (outer[b].size() != v[b].size())
        throw ValidationError(std::string("parameter field '") + key + "' has wrong block length");
      for (std::size_t i = 0; i < v[b].size(); ++i) v[b][i] = outer[b][i].get<double>();
    }
  };
  fill("mu", s.mu);
  fill("rho", s.rho);
  fill("mu_cross", s.mu_cross);
  fill("rho_cross", s.rho_cross);
  fill_nested("delta_mu", s.delta_mu);
  fill_nested("delta_rho", s.delta_rho);
  fill_nested("delta_mu_cross", s.delta_mu_cross);
  fill_nested("delta_rho_cross", s.delta_rho_cross);
  fill_nested("gamma_alpha", s.gamma_alpha);
  fill_nested("gamma_beta", s.gamma_beta);
  fill("sigma", s.sigma);
  for (double sk : s.sigma)
    if (!(sk > 0.0)) throw ValidationError("sigma entries must be strictly positive");
  if (doc.contains("omega")) {
    const int K = ctx.K();
    const json& om = doc["omega"];
    if (static_cast<int>(om.size()) != K) throw ValidationError("omega must be 2T x 2T");
    std::vector<double> omega(static_cast<std::size_t>(K) * K);
    for (int r = 0; r < K; ++r) {
      if (static_cast<int>(om[static_cast<std::size_t>(r)].size()) != K)
        throw ValidationError("omega must be 2T x 2T");
      for (int c = 0; c < K; ++c)
        omega[static_cast<std::size_t>(r) * K + c] =
            om[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    }
    for (int r = 0; r < K; ++r) {
      if (std::fabs(omega[static_cast<std::size_t>(r) * K + r] - 1.0) > 1e-8)
        throw ValidationError("omega must have a unit diagonal");
      for (int c = 0; c < K; ++c)
        if (std::fabs(omega[static_cast<std::size_t>(r) * K + c] -
                      omega[static_cast<std::size_t>(c) * K + r]) > 1e-8)
          throw ValidationError("omega must be symmetric");
    }
    s.chol = chol_from_correlation(omega, K);
  }
  if (doc.contains("z_actor")) {
    const json& z = doc["z_actor"];
    if (static_cast<int>(z.size()) != ctx.n()) throw ValidationError("z_actor must be n x 2T");
    for (int i = 0; i < ctx.n(); ++i) {
      if (static_cast<int>(z[static_cast<std::size_t>(i)].size()) != ctx.K())
        throw ValidationError("z_actor must be n x 2T");
      for (int k = 0; k < ctx.K(); ++k)
        s.z_actor[static_cast<std::size_t>(i) * ctx.K() + k] =
            z[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Batch persistence: a directory of network bundles plus a manifest
// ---------------------------------------------------------------------------

inline void write_sim_batch(const SimBatch& batch, const std::filesystem::path& dir,
                            const json& provenance = json::object()) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["provenance"] = provenance;
  manifest["source"] = provenance_name(batch.provenance);
  manifest["count"] = batch.networks.size();
  json files = json::array();
  for (std::size_t i = 0; i < batch.networks.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "net_%06zu.json", i);
    write_json_file(network_to_json(batch.networks[i]), dir / name);
    files.push_back(name);
  }
  manifest["networks"] = std::move(files);
  write_json_file(manifest, dir / "manifest.json");
}

inline std::vector<MultiplexNetwork> read_sim_batch(const std::filesystem::path& dir) {
  const json manifest = load_json_file(dir / "manifest.json");
  std::vector<MultiplexNetwork> nets;
  for (const auto& name : manifest.at("networks"))
    nets.push_back(network_from_json(load_json_file(dir / name.get<std::string>())));
  return nets;
}

}  // namespace mp2
