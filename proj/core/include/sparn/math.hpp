#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace sparn {

inline double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// log(1 + exp(t)) without overflow.
inline double softplus(double t) {
  return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

/// log P(label | score) for a ±1 label under a logistic conditional.
inline double log_sigmoid_pm(double label, double score) { return -softplus(-label * score); }

inline double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

}  // namespace sparn
