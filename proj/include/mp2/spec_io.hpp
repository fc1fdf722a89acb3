#pragma once

#include <string>
#include <vector>

#include "mp2/model.hpp"
#include "mp2/network.hpp"

namespace mp2 {

// Model specification JSON:
// {
//   "layers": ["a", "b"],
//   "effects": {
//     "density":           {"a": ["cov", ...], ...},
//     "reciprocity":       {...},
//     "cross_density":     {"a:b": [...], ...},
//     "cross_reciprocity": {...},
//     "sender":            {...},
//     "receiver":          {...}
//   },
//   "priors": {"baseline_sd": 10, ...}   // optional overrides
// }
inline json spec_to_json(const ModelSpec& spec) {
  json doc;
  doc["layers"] = spec.layers;
  json effects = json::object();
  auto put_layer_map = [&](const char* key, const std::vector<std::vector<std::string>>& blocks) {
    json m = json::object();
    for (std::size_t t = 0; t < blocks.size(); ++t)
      if (!blocks[t].empty()) m[spec.layers[t]] = blocks[t];
    effects[key] = std::move(m);
  };
  auto put_pair_map = [&](const char* key, const std::vector<std::vector<std::string>>& blocks) {
    json m = json::object();
    for (std::size_t p = 0; p < blocks.size(); ++p)
      if (!blocks[p].empty()) {
        const auto [t, s] = pair_layers(static_cast<int>(p), spec.T());
        m[spec.layers[static_cast<std::size_t>(t)] + ":" + spec.layers[static_cast<std::size_t>(s)]] =
            blocks[p];
      }
    effects[key] = std::move(m);
  };
  put_layer_map("density", spec.density_covs);
  put_layer_map("reciprocity", spec.reciprocity_covs);
  put_pair_map("cross_density", spec.cross_density_covs);
  put_pair_map("cross_reciprocity", spec.cross_recip_covs);
  put_layer_map("sender", spec.sender_covs);
  put_layer_map("receiver", spec.receiver_covs);
  doc["effects"] = std::move(effects);
  doc["priors"] = {{"baseline_sd", spec.prior.baseline_sd},
                   {"coeff_scale_numerator", spec.prior.coeff_scale_numerator},
                   {"sigma_shape", spec.prior.sigma_shape},
                   {"sigma_scale", spec.prior.sigma_scale},
                   {"lkj_eta", spec.prior.lkj_eta}};
  return doc;
}

inline ModelSpec spec_from_json(const json& doc) {
  if (!doc.contains("layers") || !doc["layers"].is_array() || doc["layers"].empty())
    throw ValidationError("model spec needs a non-empty 'layers' array");
  ModelSpec spec;
  for (const auto& name : doc["layers"]) spec.layers.push_back(name.get<std::string>());
  spec.resize_blocks();
  auto names_of = [](const json& arr) {
    std::vector<std::string> out;
    for (const auto& v : arr) out.push_back(v.get<std::string>());
    return out;
  };
  if (doc.contains("effects")) {
    const json& effects = doc["effects"];
    auto read_layer_map = [&](const char* key, std::vector<std::vector<std::string>>& blocks) {
      if (!effects.contains(key)) return;
      for (const auto& item : effects[key].items()) {
        const int t = spec.layer_index(item.key());
        if (t < 0)
          throw ValidationError(std::string("effect '") + key + "' refers to unknown layer '" +
                                item.key() + "'");
        blocks[static_cast<std::size_t>(t)] = names_of(item.value());
      }
    };
    auto read_pair_map = [&](const char* key, std::vector<std::vector<std::string>>& blocks) {
      if (!effects.contains(key)) return;
      for (const auto& item : effects[key].items()) {
        const std::size_t colon = item.key().find(':');
        if (colon == std::string::npos)
          throw ValidationError(std::string("effect '") + key +
                                "' keys must name a layer pair as 'a:b'");
        int t = spec.layer_index(item.key().substr(0, colon));
        int s = spec.layer_index(item.key().substr(colon + 1));
        if (t < 0 || s < 0 || t == s)
          throw ValidationError(std::string("effect '") + key + "' has invalid layer pair '" +
                                item.key() + "'");
        if (t > s) std::swap(t, s);
        blocks[static_cast<std::size_t>(pair_index(t, s, spec.T()))] = names_of(item.value());
      }
    };
    read_layer_map("density", spec.density_covs);
    read_layer_map("reciprocity", spec.reciprocity_covs);
    read_pair_map("cross_density", spec.cross_density_covs);
    read_pair_map("cross_reciprocity", spec.cross_recip_covs);
    read_layer_map("sender", spec.sender_covs);
    read_layer_map("receiver", spec.receiver_covs);
  }
  if (doc.contains("priors")) {
    const json& p = doc["priors"];
    if (p.contains("baseline_sd")) spec.prior.baseline_sd = p["baseline_sd"].get<double>();
    if (p.contains("coeff_scale_numerator"))
      spec.prior.coeff_scale_numerator = p["coeff_scale_numerator"].get<double>();
    if (p.contains("sigma_shape")) spec.prior.sigma_shape = p["sigma_shape"].get<double>();
    if (p.contains("sigma_scale")) spec.prior.sigma_scale = p["sigma_scale"].get<double>();
    if (p.contains("lkj_eta")) spec.prior.lkj_eta = p["lkj_eta"].get<double>();
  }
  spec.prior.validate();
  return spec;
}

// Build the network in the spec's layer order from a data bundle.
inline MultiplexNetwork network_from_bundle(const json& doc, const ModelSpec& spec) {
  if (!doc.contains("layers") || !doc["layers"].is_object())
    throw ValidationError("data bundle needs a 'layers' object");
  json reordered = json::object();
  for (const auto& name : spec.layers) {
    if (!doc["layers"].contains(name))
      throw ValidationError("data bundle is missing layer '" + name + "'");
    reordered[name] = doc["layers"][name];
  }
  json shell;
  shell["layers"] = std::move(reordered);
  return network_from_json(shell);
}

}  // namespace mp2
