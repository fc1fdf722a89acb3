#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mp2/common.hpp"
#include "mp2/math.hpp"

namespace mp2 {

using json = nlohmann::ordered_json;

inline constexpr std::int8_t kMissing = -1;

// Directed binary multiplex network: n actors, T layers, entries 0/1/missing.
// The diagonal is structurally zero (never missing) and immutable once built.
class MultiplexNetwork {
 public:
  MultiplexNetwork(int n, int T, std::vector<std::string> layer_names = {})
      : n_(n), T_(T), layer_names_(std::move(layer_names)) {
    if (n < 2) throw ValidationError("network needs at least 2 actors");
    if (T < 1) throw ValidationError("network needs at least 1 layer");
    if (layer_names_.empty()) {
      for (int t = 0; t < T; ++t) layer_names_.push_back("layer" + std::to_string(t + 1));
    }
    if (static_cast<int>(layer_names_.size()) != T)
      throw ValidationError("layer name count does not match layer count");
    for (std::size_t a = 0; a < layer_names_.size(); ++a)
      for (std::size_t b = a + 1; b < layer_names_.size(); ++b)
        if (layer_names_[a] == layer_names_[b])
          throw ValidationError("duplicate layer name: " + layer_names_[a]);
    adj_.assign(static_cast<std::size_t>(n) * n * T, 0);
  }

  int n() const { return n_; }
  int layer_count() const { return T_; }
  const std::vector<std::string>& layer_names() const { return layer_names_; }

  std::int8_t operator()(int i, int j, int t) const { return adj_[index(i, j, t)]; }

  void set(int i, int j, int t, std::int8_t value) {
    if (value != 0 && value != 1 && value != kMissing)
      throw ValidationError("tie value must be 0, 1, or missing");
    if (i == j) {
      if (value != 0) warn("self-loop entry coerced to 0 (diagonal is structurally zero)");
      return;
    }
    adj_[index(i, j, t)] = value;
  }

  bool has_missing() const {
    for (std::int8_t v : adj_)
      if (v == kMissing) return true;
    return false;
  }

  int tie_count(int t) const {
    int c = 0;
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        if (i != j && (*this)(i, j, t) == 1) ++c;
    return c;
  }

  MultiplexNetwork transposed() const {
    MultiplexNetwork out(n_, T_, layer_names_);
    for (int t = 0; t < T_; ++t)
      for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j)
          if (i != j) out.set(j, i, t, (*this)(i, j, t));
    return out;
  }

  bool operator==(const MultiplexNetwork& other) const {
    return n_ == other.n_ && T_ == other.T_ && adj_ == other.adj_ &&
           layer_names_ == other.layer_names_;
  }

 private:
  std::size_t index(int i, int j, int t) const {
    if (i < 0 || i >= n_ || j < 0 || j >= n_ || t < 0 || t >= T_)
      throw std::out_of_range("network index out of range");
    return (static_cast<std::size_t>(t) * n_ + i) * n_ + j;
  }

  int n_;
  int T_;
  std::vector<std::string> layer_names_;
  std::vector<std::int8_t> adj_;
};

// Joint outcome on an ordered pair i < j: bit 2t holds the tie i->j in layer
// t+1, bit 2t+1 the tie j->i. Mask bits mark missing entries.
struct DyadOutcome {
  std::uint32_t bits = 0;
  std::uint32_t mask = 0;
};

inline DyadOutcome extract_dyad(const MultiplexNetwork& net, int i, int j) {
  if (i == j) throw std::invalid_argument("extract_dyad: i and j must differ");
  if (i > j) throw std::invalid_argument("extract_dyad: requires i < j");
  if (i < 0 || j >= net.n()) throw std::out_of_range("extract_dyad: index out of range");
  DyadOutcome out;
  for (int t = 0; t < net.layer_count(); ++t) {
    const std::int8_t fwd = net(i, j, t);
    const std::int8_t bwd = net(j, i, t);
    if (fwd == kMissing)
      out.mask |= 1u << (2 * t);
    else if (fwd == 1)
      out.bits |= 1u << (2 * t);
    if (bwd == kMissing)
      out.mask |= 1u << (2 * t + 1);
    else if (bwd == 1)
      out.bits |= 1u << (2 * t + 1);
  }
  return out;
}

inline std::vector<std::pair<int, int>> dyad_pairs(int n) {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out.emplace_back(i, j);
  return out;
}

template <typename F>
void for_each_dyad(int n, F&& fn) {
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) fn(i, j);
}

// Named dyadic (n x n) and actor (length n) covariates. Plain data; which
// covariate feeds which effect is part of the model specification.
class CovariateSet {
 public:
  CovariateSet() = default;
  explicit CovariateSet(int n) : n_(n) {}

  int n() const { return n_; }

  void add_dyadic(const std::string& name, std::vector<double> values) {
    require_unused(name);
    if (static_cast<int>(values.size()) != n_ * n_)
      throw ValidationError("dyadic covariate '" + name + "' is not n x n");
    dyadic_names_.push_back(name);
    dyadic_.push_back(std::move(values));
  }

  void add_actor(const std::string& name, std::vector<double> values) {
    require_unused(name);
    if (static_cast<int>(values.size()) != n_)
      throw ValidationError("actor covariate '" + name + "' is not length n");
    for (double v : values)
      if (!std::isfinite(v))
        throw ValidationError("actor covariate '" + name + "' has missing or non-finite entries");
    actor_names_.push_back(name);
    actor_.push_back(std::move(values));
  }

  int dyadic_index(const std::string& name) const {
    for (std::size_t k = 0; k < dyadic_names_.size(); ++k)
      if (dyadic_names_[k] == name) return static_cast<int>(k);
    return -1;
  }

  int actor_index(const std::string& name) const {
    for (std::size_t k = 0; k < actor_names_.size(); ++k)
      if (actor_names_[k] == name) return static_cast<int>(k);
    return -1;
  }

  double dyadic_value(int k, int i, int j) const {
    return dyadic_[static_cast<std::size_t>(k)][static_cast<std::size_t>(i) * n_ + j];
  }

  double actor_value(int k, int i) const {
    return actor_[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
  }

  const std::vector<std::string>& dyadic_names() const { return dyadic_names_; }
  const std::vector<std::string>& actor_names() const { return actor_names_; }

  // Pooled off-diagonal sample SD (denominator N - 1 over the n(n-1) cells).
  double dyadic_sd(int k) const {
    std::vector<double> cells;
    cells.reserve(static_cast<std::size_t>(n_) * (n_ - 1));
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        if (i != j) cells.push_back(dyadic_value(k, i, j));
    return sample_sd(cells);
  }

  double actor_sd(int k) const { return sample_sd(actor_[static_cast<std::size_t>(k)]); }

 private:
  void require_unused(const std::string& name) const {
    if (dyadic_index(name) >= 0 || actor_index(name) >= 0)
      throw ValidationError("duplicate covariate name: " + name);
  }

  int n_ = 0;
  std::vector<std::string> dyadic_names_;
  std::vector<std::vector<double>> dyadic_;
  std::vector<std::string> actor_names_;
  std::vector<std::vector<double>> actor_;
};

namespace detail {

inline bool is_tie_token(const std::string& s) {
  return s == "0" || s == "1" || s == "NA";
}

inline std::int8_t parse_tie_token(const std::string& s, const std::string& where) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  if (s == "NA") return kMissing;
  throw ValidationError("non-binary entry '" + s + "' in " + where +
                        " (expected 0, 1, or NA)");
}

}  // namespace detail

// One CSV file per layer: an n x n matrix of {0,1,NA}, optional header row of
// actor labels. Returns the matrix in row-major order.
inline std::vector<std::int8_t> load_layer_csv(const std::filesystem::path& path, int& n_out) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read file: " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    rows.push_back(split_csv(line));
  }
  if (rows.empty()) throw ValidationError("empty layer file: " + path.string());
  // A header row is any first row containing a non-tie token.
  bool header = false;
  for (const auto& f : rows.front())
    if (!detail::is_tie_token(f)) header = true;
  if (header) rows.erase(rows.begin());
  const int n = static_cast<int>(rows.size());
  std::vector<std::int8_t> m(static_cast<std::size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[static_cast<std::size_t>(i)].size()) != n)
      throw ValidationError("row " + std::to_string(i + 1) + " of " + path.string() +
                            " has " + std::to_string(rows[static_cast<std::size_t>(i)].size()) +
                            " fields, expected " + std::to_string(n));
    for (int j = 0; j < n; ++j)
      m[static_cast<std::size_t>(i) * n + j] = detail::parse_tie_token(
          rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], path.string());
  }
  n_out = n;
  return m;
}

inline MultiplexNetwork load_multiplex(const std::vector<std::filesystem::path>& layer_files,
                                       std::vector<std::string> layer_names = {}) {
  if (layer_files.empty()) throw ValidationError("no layer files given");
  std::vector<std::vector<std::int8_t>> layers;
  int n = 0;
  for (std::size_t t = 0; t < layer_files.size(); ++t) {
    int nt = 0;
    layers.push_back(load_layer_csv(layer_files[t], nt));
    if (t == 0)
      n = nt;
    else if (nt != n)
      throw ValidationError("layer dimension mismatch: " + layer_files[t].string() + " is " +
                            std::to_string(nt) + "x" + std::to_string(nt) + ", expected " +
                            std::to_string(n) + "x" + std::to_string(n));
  }
  if (layer_names.empty())
    for (const auto& p : layer_files) layer_names.push_back(p.stem().string());
  MultiplexNetwork net(n, static_cast<int>(layer_files.size()), std::move(layer_names));
  for (int t = 0; t < net.layer_count(); ++t)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        net.set(i, j, t, layers[static_cast<std::size_t>(t)][static_cast<std::size_t>(i) * n + j]);
  return net;
}

inline void write_layer_csv(const MultiplexNetwork& net, int t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  for (int i = 0; i < net.n(); ++i) {
    for (int j = 0; j < net.n(); ++j) {
      if (j) out << ',';
      const std::int8_t v = net(i, j, t);
      out << (v == kMissing ? "NA" : (v ? "1" : "0"));
    }
    out << '\n';
  }
}

// JSON bundle: {"layers": {...}, "dyadic_covariates": {...},
// "actor_covariates": {...}}. Missing ties are null; actor covariates must be
// fully observed and are rejected otherwise.
inline json network_to_json(const MultiplexNetwork& net) {
  json layers = json::object();
  for (int t = 0; t < net.layer_count(); ++t) {
    json rows = json::array();
    for (int i = 0; i < net.n(); ++i) {
      json row = json::array();
      for (int j = 0; j < net.n(); ++j) {
        const std::int8_t v = net(i, j, t);
        if (v == kMissing)
          row.push_back(nullptr);
        else
          row.push_back(static_cast<int>(v));
      }
      rows.push_back(std::move(row));
    }
    layers[net.layer_names()[static_cast<std::size_t>(t)]] = std::move(rows);
  }
  return json{{"layers", std::move(layers)}};
}

inline MultiplexNetwork network_from_json(const json& doc) {
  if (!doc.contains("layers") || !doc["layers"].is_object() || doc["layers"].empty())
    throw ValidationError("network bundle needs a non-empty 'layers' object");
  std::vector<std::string> names;
  for (const auto& item : doc["layers"].items()) names.push_back(item.key());
  const json& first = doc["layers"][names.front()];
  const int n = static_cast<int>(first.size());
  MultiplexNetwork net(n, static_cast<int>(names.size()), names);
  for (std::size_t t = 0; t < names.size(); ++t) {
    const json& rows = doc["layers"][names[t]];
    if (static_cast<int>(rows.size()) != n)
      throw ValidationError("layer '" + names[t] + "' dimension mismatch");
    for (int i = 0; i < n; ++i) {
      const json& row = rows[static_cast<std::size_t>(i)];
      if (static_cast<int>(row.size()) != n)
        throw ValidationError("layer '" + names[t] + "' row " + std::to_string(i + 1) +
                              " has wrong length");
      for (int j = 0; j < n; ++j) {
        const json& cell = row[static_cast<std::size_t>(j)];
        if (cell.is_null()) {
          net.set(i, j, static_cast<int>(t), kMissing);
        } else {
          const double v = cell.get<double>();
          if (v != 0.0 && v != 1.0)
            throw ValidationError("non-binary entry in layer '" + names[t] + "'");
          net.set(i, j, static_cast<int>(t), static_cast<std::int8_t>(v));
        }
      }
    }
  }
  return net;
}

inline CovariateSet covariates_from_json(const json& doc, int n) {
  CovariateSet covs(n);
  if (doc.contains("dyadic_covariates")) {
    for (const auto& item : doc["dyadic_covariates"].items()) {
      const json& rows = item.value();
      if (static_cast<int>(rows.size()) != n)
        throw ValidationError("dyadic covariate '" + item.key() + "' is not n x n");
      std::vector<double> values(static_cast<std::size_t>(n) * n, 0.0);
      for (int i = 0; i < n; ++i) {
        const json& row = rows[static_cast<std::size_t>(i)];
        if (static_cast<int>(row.size()) != n)
          throw ValidationError("dyadic covariate '" + item.key() + "' row has wrong length");
        for (int j = 0; j < n; ++j) {
          const json& cell = row[static_cast<std::size_t>(j)];
          if (cell.is_null())
            throw ValidationError("dyadic covariate '" + item.key() +
                                  "' has missing entries; covariates must be fully observed");
          values[static_cast<std::size_t>(i) * n + j] = cell.get<double>();
        }
      }
      covs.add_dyadic(item.key(), std::move(values));
    }
  }
  if (doc.contains("actor_covariates")) {
    for (const auto& item : doc["actor_covariates"].items()) {
      const json& arr = item.value();
      if (static_cast<int>(arr.size()) != n)
        throw ValidationError("actor covariate '" + item.key() + "' is not length n");
      std::vector<double> values(static_cast<std::size_t>(n), 0.0);
      for (int i = 0; i < n; ++i) {
        const json& cell = arr[static_cast<std::size_t>(i)];
        if (cell.is_null())
          throw ValidationError("actor covariate '" + item.key() +
                                "' has missing entries; covariates must be fully observed");
        values[static_cast<std::size_t>(i)] = cell.get<double>();
      }
      covs.add_actor(item.key(), std::move(values));
    }
  }
  return covs;
}

inline json bundle_to_json(const MultiplexNetwork& net, const CovariateSet& covs) {
  json doc = network_to_json(net);
  json dyadic = json::object();
  for (std::size_t k = 0; k < covs.dyadic_names().size(); ++k) {
    json rows = json::array();
    for (int i = 0; i < covs.n(); ++i) {
      json row = json::array();
      for (int j = 0; j < covs.n(); ++j)
        row.push_back(covs.dyadic_value(static_cast<int>(k), i, j));
      rows.push_back(std::move(row));
    }
    dyadic[covs.dyadic_names()[k]] = std::move(rows);
  }
  json actor = json::object();
  for (std::size_t k = 0; k < covs.actor_names().size(); ++k) {
    json arr = json::array();
    for (int i = 0; i < covs.n(); ++i) arr.push_back(covs.actor_value(static_cast<int>(k), i));
    actor[covs.actor_names()[k]] = std::move(arr);
  }
  doc["dyadic_covariates"] = std::move(dyadic);
  doc["actor_covariates"] = std::move(actor);
  return doc;
}

inline json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read file: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw ValidationError("invalid JSON in " + path.string() + ": " + e.what());
  }
  return doc;
}

inline void write_json_file(const json& doc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace mp2
