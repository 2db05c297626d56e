#pragma once

// Seeded random variates: Marsaglia-Tsang gamma (log-space for small shapes),
// Dirichlet, categorical and Poisson draws.

#include "common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace ldta {

using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
  // 53 random bits mapped to (0, 1).
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

inline double standard_normal(Rng& rng) {
  // Marsaglia polar method.
  while (true) {
    const double u = 2.0 * uniform01(rng) - 1.0;
    const double v = 2.0 * uniform01(rng) - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

/// log of a Gamma(shape, 1) variate. For shape < 1 the boost
/// Gamma(shape) = Gamma(shape + 1) * U^(1/shape) is applied in log space so
/// tiny shapes do not underflow to zero.
inline double sample_log_gamma(double shape, Rng& rng) {
  if (!(shape > 0.0) || !std::isfinite(shape)) {
    throw std::invalid_argument("sample_log_gamma: shape must be positive");
  }
  double log_boost = 0.0;
  if (shape < 1.0) {
    log_boost = std::log(uniform01(rng)) / shape;
    shape += 1.0;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01(rng);
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2 ||
        std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
      return std::log(d * v) + log_boost;
    }
  }
}

inline double sample_gamma(double shape, Rng& rng) { return std::exp(sample_log_gamma(shape, rng)); }

/// Dirichlet draw via normalised gamma variates (normalised in log space).
inline Vector sample_dirichlet(const Vector& alpha, Rng& rng) {
  Vector log_g(alpha.size());
  for (Eigen::Index i = 0; i < alpha.size(); ++i) log_g(i) = sample_log_gamma(alpha(i), rng);
  const double m = log_g.maxCoeff();
  Vector out = (log_g.array() - m).exp();
  return out / out.sum();
}

/// Index drawn with probability proportional to weights (assumed >= 0).
inline std::size_t sample_categorical(const Vector& weights, Rng& rng) {
  const double total = weights.sum();
  double u = uniform01(rng) * total;
  const Eigen::Index last = weights.size() - 1;
  for (Eigen::Index i = 0; i < last; ++i) {
    u -= weights(i);
    if (u < 0.0) return sz(i);
  }
  // Rounding can leave u marginally non-negative; fall back to the last
  // positive entry.
  for (Eigen::Index i = last; i >= 0; --i) {
    if (weights(i) > 0.0) return sz(i);
  }
  throw std::invalid_argument("sample_categorical: all weights are zero");
}

inline std::uint64_t sample_poisson(double mean, Rng& rng) {
  std::poisson_distribution<std::uint64_t> dist(mean);
  return dist(rng);
}

}  // namespace ldta
