#pragma once

// Special functions used throughout: log-gamma, digamma, trigamma and the
// inverse of the digamma function.

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ldta {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline double log_gamma(double x) {
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

namespace detail {

// Arguments below this threshold are shifted upward by the recurrences
// before the asymptotic series is applied.
inline constexpr double kAsymptoticThreshold = 6.0;

inline double digamma_asymptotic(double x) {
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli terms B_2 .. B_14 of the Stirling-type expansion.
  const double series =
      inv2 * (1.0 / 12 -
              inv2 * (1.0 / 120 -
                      inv2 * (1.0 / 252 -
                              inv2 * (1.0 / 240 -
                                      inv2 * (1.0 / 132 -
                                              inv2 * (691.0 / 32760 -
                                                      inv2 * (1.0 / 12)))))));
  return std::log(x) - 0.5 * inv - series;
}

inline double trigamma_asymptotic(double x) {
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      1.0 / 6 -
      inv2 * (1.0 / 30 -
              inv2 * (1.0 / 42 -
                      inv2 * (1.0 / 30 -
                              inv2 * (5.0 / 66 -
                                      inv2 * (691.0 / 2730 -
                                              inv2 * (7.0 / 6))))));
  return inv + 0.5 * inv2 + inv * inv2 * series;
}

}  // namespace detail

/// psi(x) for x > 0. Upward recurrence to x >= 6, then the asymptotic series.
inline double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError("digamma: argument must be positive and finite, got " +
                      std::to_string(x));
  }
  int shift = 0;
  while (x + shift < detail::kAsymptoticThreshold) ++shift;
  double result = detail::digamma_asymptotic(x + shift);
  // Subtract the smallest corrections first so psi(x) = psi(x+1) - 1/x holds
  // to rounding.
  for (int i = shift - 1; i >= 0; --i) result -= 1.0 / (x + i);
  return result;
}

/// psi'(x) for x > 0.
inline double trigamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError("trigamma: argument must be positive and finite, got " +
                      std::to_string(x));
  }
  int shift = 0;
  while (x + shift < detail::kAsymptoticThreshold) ++shift;
  double result = detail::trigamma_asymptotic(x + shift);
  for (int i = shift - 1; i >= 0; --i) {
    const double t = x + i;
    result += 1.0 / (t * t);
  }
  return result;
}

/// Solves digamma(x) = y for x > 0 (Minka's initialisation plus Newton).
inline double inverse_digamma(double y) {
  if (!std::isfinite(y)) {
    throw DomainError("inverse_digamma: argument must be finite");
  }
  constexpr double euler_gamma = std::numbers::egamma;
  double x = y >= -2.22 ? std::exp(y) + 0.5 : -1.0 / (y + euler_gamma);
  for (int iter = 0; iter < 50; ++iter) {
    const double step = (digamma(x) - y) / trigamma(x);
    double next = x - step;
    // Newton from Minka's start is monotone in exact arithmetic; guard the
    // lower bound anyway for extreme y.
    if (next <= 0.0) next = 0.5 * x;
    const bool done = std::abs(next - x) <= 1e-15 * std::max(1.0, x);
    x = next;
    if (done) break;
  }
  return x;
}

}  // namespace ldta
