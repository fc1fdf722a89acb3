#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mp2/math.hpp"
#include "mp2/sampler.hpp"

namespace mp2 {

// One group's posterior summary for a single parameter.
struct GroupEstimate {
  std::string group;
  double theta_hat = 0.0;  // posterior mean
  double se = 0.0;         // posterior sd
};

struct MetaPrior {
  double mu_sd = 10.0;     // Normal(0, mu_sd) on the population mean
  double tau_scale = 0.5;  // half-Cauchy(0, tau_scale) on the population sd
};

// Normal-normal hierarchical model, non-centered:
//   theta_hat_j ~ N(theta_j, se_j^2),  theta_j = mu + tau * eta_j,
//   eta_j ~ N(0, 1), tau > 0 sampled on the log scale.
// An optional fixed tau drops the tau coordinate (used for limit checks).
class MetaTarget final : public LogDensity {
 public:
  MetaTarget(std::vector<GroupEstimate> groups, MetaPrior prior,
             std::optional<double> fixed_tau = std::nullopt)
      : groups_(std::move(groups)), prior_(prior), fixed_tau_(fixed_tau) {
    if (groups_.size() < 2) throw ValidationError("meta-analysis needs at least 2 groups");
    for (const auto& g : groups_)
      if (!(g.se > 0.0))
        throw ValidationError("group '" + g.group + "' has non-positive standard error");
  }

  std::size_t J() const { return groups_.size(); }

  std::size_t dim() const override { return (fixed_tau_ ? 1 : 2) + groups_.size(); }

  std::size_t output_dim() const override { return 2 + groups_.size(); }

  std::vector<std::string> output_names() const override {
    std::vector<std::string> names = {"mu", "tau"};
    for (const auto& g : groups_) names.push_back("theta[" + g.group + "]");
    return names;
  }

  void outputs(std::span<const double> x, std::span<double> out) const override {
    const double mu = x[0];
    const double tau = fixed_tau_ ? *fixed_tau_ : std::exp(x[1]);
    const std::size_t off = fixed_tau_ ? 1 : 2;
    out[0] = mu;
    out[1] = tau;
    for (std::size_t j = 0; j < groups_.size(); ++j) out[2 + j] = mu + tau * x[off + j];
  }

  double log_prob_grad(std::span<const double> x, std::span<double> grad) const override {
    const double mu = x[0];
    const double tau = fixed_tau_ ? *fixed_tau_ : std::exp(x[1]);
    if (!std::isfinite(tau) || tau <= 0.0) return kNegInf;
    const std::size_t off = fixed_tau_ ? 1 : 2;
    double lp = normal_lpdf(mu, 0.0, prior_.mu_sd);
    double gmu = -mu / (prior_.mu_sd * prior_.mu_sd);
    double gtau = 0.0;
    if (!fixed_tau_) {
      lp += half_cauchy_lpdf(tau, prior_.tau_scale) + x[1];  // + log tau Jacobian
      gtau += -2.0 * tau / (prior_.tau_scale * prior_.tau_scale + tau * tau);
    }
    for (std::size_t j = 0; j < groups_.size(); ++j) {
      const double eta = x[off + j];
      const double theta = mu + tau * eta;
      const double se = groups_[j].se;
      const double resid = (groups_[j].theta_hat - theta) / (se * se);
      lp += normal_lpdf(groups_[j].theta_hat, theta, se) + std_normal_lpdf(eta);
      gmu += resid;
      gtau += resid * eta;
      grad[off + j] = resid * tau - eta;
    }
    grad[0] = gmu;
    if (!fixed_tau_) grad[1] = gtau * tau + 1.0;
    if (!std::isfinite(lp)) return kNegInf;
    return lp;
  }

 private:
  std::vector<GroupEstimate> groups_;
  MetaPrior prior_;
  std::optional<double> fixed_tau_;
};

inline SampleResult meta_fit(const std::vector<GroupEstimate>& groups, const MetaPrior& prior,
                             const SamplerConfig& cfg) {
  MetaTarget target(groups, prior);
  return sample(target, cfg);
}

struct MetaSummary {
  SummaryRow mu, tau;
  std::vector<SummaryRow> theta;
};

inline MetaSummary meta_summarize(const DrawsMatrix& draws) {
  MetaSummary out;
  const std::vector<SummaryRow> rows = summarize(draws);
  for (const auto& r : rows) {
    if (r.name == "mu")
      out.mu = r;
    else if (r.name == "tau")
      out.tau = r;
    else
      out.theta.push_back(r);
  }
  return out;
}

// Conditional posterior of mu given tau (normal-normal algebra):
//   precision = 1/mu_sd^2 + sum_j 1/(se_j^2 + tau^2),
//   mean = (sum_j theta_hat_j / (se_j^2 + tau^2)) / precision.
struct NormalMoments {
  double mean = 0.0;
  double sd = 0.0;
};

inline NormalMoments conditional_mu_posterior(const std::vector<GroupEstimate>& groups,
                                              const MetaPrior& prior, double tau) {
  double prec = 1.0 / (prior.mu_sd * prior.mu_sd);
  double wsum = 0.0;
  for (const auto& g : groups) {
    const double w = 1.0 / (g.se * g.se + tau * tau);
    prec += w;
    wsum += w * g.theta_hat;
  }
  return {wsum / prec, std::sqrt(1.0 / prec)};
}

inline double precision_weighted_mean(const std::vector<GroupEstimate>& groups) {
  double wsum = 0.0, w = 0.0;
  for (const auto& g : groups) {
    wsum += g.theta_hat / (g.se * g.se);
    w += 1.0 / (g.se * g.se);
  }
  return wsum / w;
}

// ---------------------------------------------------------------------------
// CSV interfaces: input rows group,parameter,mean,sd; one meta fit per
// parameter.
// ---------------------------------------------------------------------------

inline std::map<std::string, std::vector<GroupEstimate>> read_group_estimates(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read file: " + path.string());
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    header = split_csv(line);
    break;
  }
  if (header.size() != 4 || header[0] != "group" || header[1] != "parameter" ||
      header[2] != "mean" || header[3] != "sd")
    throw ValidationError("meta input must have columns group,parameter,mean,sd: " +
                          path.string());
  std::map<std::string, std::vector<GroupEstimate>> out;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const std::vector<std::string> fields = split_csv(line);
    if (fields.size() < 4) throw ValidationError("malformed meta input row: " + line);
    // unquoted parameter names may contain commas (mu_cross[1,2]); the
    // group is the first field and mean/sd the last two
    std::string parameter = fields[1];
    for (std::size_t f = 2; f + 2 < fields.size(); ++f) parameter += "," + fields[f];
    GroupEstimate g;
    g.group = fields[0];
    try {
      g.theta_hat = std::stod(fields[fields.size() - 2]);
      g.se = std::stod(fields[fields.size() - 1]);
    } catch (const std::exception&) {
      throw ValidationError("malformed meta input row: " + line);
    }
    out[parameter].push_back(std::move(g));
  }
  if (out.empty()) throw ValidationError("meta input has no rows: " + path.string());
  return out;
}

inline void write_meta_summary_csv(
    const std::vector<std::pair<std::string, MetaSummary>>& summaries,
    const std::filesystem::path& path, const std::vector<std::string>& provenance = {}) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  for (const auto& line : provenance) out << "# " << line << '\n';
  out << "parameter,mu_mean,mu_q025,mu_q975,tau_mean,tau_q025,tau_q975,mu_rhat,mu_ess\n";
  for (const auto& [name, s] : summaries) {
    out << csv_field(name) << ',' << format_double(s.mu.mean) << ',' << format_double(s.mu.q025) << ','
        << format_double(s.mu.q975) << ',' << format_double(s.tau.mean) << ','
        << format_double(s.tau.q025) << ',' << format_double(s.tau.q975) << ','
        << format_double(s.mu.rhat) << ',' << format_double(s.mu.ess) << '\n';
  }
}

inline void write_meta_theta_csv(const std::vector<std::pair<std::string, MetaSummary>>& summaries,
                                 const std::filesystem::path& path,
                                 const std::vector<std::string>& provenance = {}) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  for (const auto& line : provenance) out << "# " << line << '\n';
  out << "parameter,group,mean,sd,q025,q50,q975\n";
  for (const auto& [name, s] : summaries)
    for (const auto& row : s.theta) {
      // row names look like theta[group]
      std::string group = row.name;
      if (group.rfind("theta[", 0) == 0 && group.back() == ']')
        group = group.substr(6, group.size() - 7);
      out << csv_field(name) << ',' << csv_field(group) << ',' << format_double(row.mean) << ','
          << format_double(row.sd) << ',' << format_double(row.q025) << ','
          << format_double(row.q50) << ',' << format_double(row.q975) << '\n';
    }
}

}  // namespace mp2
