#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mp2 {

// Differentiable unnormalized log density over R^dim. Implementations must
// be safe to call concurrently; chains run in parallel.
class LogDensity {
 public:
  virtual ~LogDensity() = default;

  virtual std::size_t dim() const = 0;

  // Returns the log density at `position` and fills `grad` (same length).
  // -inf marks an untenable point; the sampler rejects it as a divergence.
  virtual double log_prob_grad(std::span<const double> position,
                               std::span<double> grad) const = 0;

  // Reported (possibly transformed) values and their names; defaults to the
  // raw coordinates.
  virtual std::size_t output_dim() const { return dim(); }

  virtual std::vector<std::string> output_names() const {
    std::vector<std::string> names;
    names.reserve(dim());
    for (std::size_t i = 0; i < dim(); ++i) names.push_back("p[" + std::to_string(i + 1) + "]");
    return names;
  }

  virtual void outputs(std::span<const double> position, std::span<double> out) const {
    for (std::size_t i = 0; i < position.size(); ++i) out[i] = position[i];
  }
};

}  // namespace mp2
