#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace mp2 {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t v) {
  std::uint64_t s = v;
  return splitmix64(s);
}

// Derived seed for an independent sub-task (replication, simulation job);
// the task then owns its own stream space.
inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t x = seed;
  (void)splitmix64(x);
  x ^= mix64(0x6a09e667f3bcc909ULL + index);
  return mix64(x);
}

// xoshiro256++ (Blackman & Vigna 2019) with the distribution samplers
// implemented locally, so a (seed, stream) pair produces identical draws on
// every platform and standard library. Streams derived from the same seed are
// decorrelated through splitmix64; chains, replications, and simulation tasks
// each get their own stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t x = seed;
    (void)splitmix64(x);
    x ^= mix64(stream);
    for (auto& word : state_) word = splitmix64(x);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe to pass through log().
  double uniform_pos() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased enough for tie-breaking and shuffles (bias < 2^-64 * bound).
  std::uint64_t uniform_int(std::uint64_t bound) {
    return static_cast<std::uint64_t>(
        (static_cast<__uint128_t>(next()) * bound) >> 64);
  }

  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Marsaglia & Tsang (2000) squeeze method; scale parameterization.
  double gamma(double shape, double scale = 1.0) {
    if (!(shape > 0.0) || !(scale > 0.0))
      throw std::invalid_argument("gamma: shape and scale must be positive");
    if (shape < 1.0) {
      const double u = uniform_pos();
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x;
      double v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return scale * d * v;
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return scale * d * v;
    }
  }

  // If G ~ Gamma(shape, 1) then scale / G ~ InverseGamma(shape, scale).
  double inv_gamma(double shape, double scale) { return scale / gamma(shape, 1.0); }

  double beta(double a, double b) {
    const double x = gamma(a, 1.0);
    const double y = gamma(b, 1.0);
    return x / (x + y);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4] = {};
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace mp2
