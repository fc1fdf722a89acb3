#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace mp2 {

// Bulk out[i] = exp(x[i] - shift) for probability tables (x[i] <= shift).
// Entries are clamped 40 nats below the peak (~4e-18 of the mass, i.e.
// negligible); the branch-free body lets the loop vectorize.
inline void exp_shifted(const double* x, double* out, int n, double shift) {
  constexpr double kRound = 6755399441055744.0;  // 1.5 * 2^52
  for (int i = 0; i < n; ++i) {
    double v = x[i] - shift;
    v = v < -40.0 ? -40.0 : v;
    const double z = v * 1.4426950408889634 + kRound;
    const auto m = static_cast<std::int32_t>(std::bit_cast<std::uint64_t>(z) & 0xffffffffULL);
    const double nd = z - kRound;
    const double r = v - nd * 0.693147180369123816490 - nd * 1.90821492927058770002e-10;
    double p = 2.50521083854417187751e-8;
    p = p * r + 2.75573192239858906526e-7;
    p = p * r + 2.75573192239858906526e-6;
    p = p * r + 2.48015873015873015873e-5;
    p = p * r + 1.98412698412698412698e-4;
    p = p * r + 1.38888888888888888889e-3;
    p = p * r + 8.33333333333333333333e-3;
    p = p * r + 4.16666666666666666667e-2;
    p = p * r + 1.66666666666666666667e-1;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    out[i] = p * std::bit_cast<double>(static_cast<std::uint64_t>(
                     static_cast<std::int64_t>(m) + 1023) << 52);
  }
}

// Deterministic four-lane summation (fixed association, vectorizes).
inline double sum_array(const double* x, int n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += x[i];
    s1 += x[i + 1];
    s2 += x[i + 2];
    s3 += x[i + 3];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += x[i];
  return ((s0 + s1) + (s2 + s3)) + tail;
}

inline constexpr double kPi = 3.14159265358979323846264338327950288;
inline constexpr double kLogTwoPi = 1.83787706640934548356065947281123527;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Max-subtracted log(sum(exp(x))); overflow safe.
inline double log_sum_exp(std::span<const double> x) {
  double m = kNegInf;
  for (double v : x) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

inline double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double normal_lpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * kLogTwoPi;
}

inline double std_normal_lpdf(double x) { return -0.5 * x * x - 0.5 * kLogTwoPi; }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double inv_gamma_lpdf(double x, double shape, double scale) {
  if (x <= 0.0) return kNegInf;
  return shape * std::log(scale) - std::lgamma(shape) -
         (shape + 1.0) * std::log(x) - scale / x;
}

// Density 2 / (pi * scale * (1 + (x/scale)^2)) on x > 0.
inline double half_cauchy_lpdf(double x, double scale) {
  if (x < 0.0) return kNegInf;
  const double r = x / scale;
  return std::log(2.0 / kPi) - std::log(scale) - std::log1p(r * r);
}

inline double lbeta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

namespace detail {

// Regularized lower incomplete gamma by series expansion (x < a + 1).
inline double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma by continued fraction (x >= a + 1).
inline double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

inline double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return detail::gamma_p_series(a, x);
  return 1.0 - detail::gamma_q_cf(a, x);
}

inline double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_cf(a, x);
}

// Upper tail of the chi-square distribution.
inline double chi_square_sf(double x, double df) { return gamma_q(0.5 * df, 0.5 * x); }

inline double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

// Sample variance, denominator n - 1.
inline double sample_variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double sample_sd(std::span<const double> x) { return std::sqrt(sample_variance(x)); }

inline double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("pearson_correlation: need two equal-length sequences");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

// Linear interpolation of order statistics at h = (n-1)p (R type 7).
// Input must be sorted ascending.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile: empty input");
  if (p <= 0.0) return sorted.front();
  if (p >= 1.0) return sorted.back();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(h);
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, p);
}

}  // namespace mp2
