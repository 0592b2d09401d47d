#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>

namespace pmala {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

inline double normal_logpdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

/// N(mean, var) log density with the variance-dependent parts precomputed.
struct ScalarGaussian {
  double var = 1.0, inv_var = 1.0, log_norm = -0.5 * kLog2Pi;

  ScalarGaussian() = default;
  explicit ScalarGaussian(double v) : var(v), inv_var(1.0 / v), log_norm(-0.5 * (kLog2Pi + std::log(v))) {}

  double operator()(double x, double mean) const {
    const double d = x - mean;
    return log_norm - 0.5 * d * d * inv_var;
  }
};

/// Standard normal CDF.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double logsumexp(std::span<const double> v) {
  double m = kNegInf;
  for (double a : v) m = std::max(m, a);
  if (m == kNegInf || std::isnan(m)) return m;
  if (std::isinf(m)) return m;
  double s = 0.0;
  for (double a : v) s += std::exp(a - m);
  return m + std::log(s);
}

inline double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double logistic(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace pmala
