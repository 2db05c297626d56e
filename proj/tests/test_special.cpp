#include "ldta/special.hpp"

#include <gtest/gtest.h>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace ldta;

namespace {

// psi(x) = -gamma + sum_{n>=0} (1/(n+1) - 1/(n+x)), summed far enough and
// closed with the asymptotic tail of the remainder.
double digamma_series(double x) {
  const int terms = 2000000;
  double s = 0.0;
  for (int n = terms - 1; n >= 0; --n) s += 1.0 / (n + 1.0) - 1.0 / (n + x);
  // Tail sum_{n>=N} (1/(n+1) - 1/(n+x)) ~ (x-1)/N - (x-1)(x)/(2N^2) approximately.
  const double N = terms;
  s += (x - 1.0) / N - (x - 1.0) * x / (2 * N * N);
  return -std::numbers::egamma + s;
}

}  // namespace

TEST(Digamma, ValueAtOneMatchesSeries) {
  EXPECT_NEAR(digamma(1.0), -0.57721566490153286, 1e-12);
  EXPECT_NEAR(digamma(1.0), digamma_series(1.0), 1e-10);
}

TEST(Trigamma, ValueAtOneIsZetaTwo) {
  EXPECT_NEAR(trigamma(1.0), std::numbers::pi * std::numbers::pi / 6.0, 1e-12);
}

TEST(Digamma, MatchesBoostOverWideRange) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> logx(std::log(1e-3), std::log(1e3));
  for (int i = 0; i < 2000; ++i) {
    const double x = std::exp(logx(rng));
    const double ref = boost::math::digamma(x);
    EXPECT_NEAR(digamma(x), ref, 1e-12 * std::max(1.0, std::abs(ref))) << "x=" << x;
    const double tref = boost::math::trigamma(x);
    EXPECT_NEAR(trigamma(x), tref, 1e-12 * std::max(1.0, tref)) << "x=" << x;
  }
}

TEST(Digamma, Recurrences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> logx(std::log(1e-3), std::log(1e3));
  for (int i = 0; i < 2000; ++i) {
    const double x = std::exp(logx(rng));
    EXPECT_NEAR(digamma(x + 1) - digamma(x), 1.0 / x, 1e-12 * std::max(1.0, 1.0 / x));
    EXPECT_NEAR(trigamma(x) - trigamma(x + 1), 1.0 / (x * x), 1e-12 * std::max(1.0, 1.0 / (x * x)));
  }
}

TEST(Digamma, RejectsNonPositive) {
  EXPECT_THROW(digamma(0.0), DomainError);
  EXPECT_THROW(digamma(-1.5), DomainError);
  EXPECT_THROW(trigamma(0.0), DomainError);
  EXPECT_THROW(digamma(std::nan("")), DomainError);
}

TEST(InverseDigamma, RoundTrip) {
  EXPECT_NEAR(inverse_digamma(digamma(1.0)), 1.0, 1e-10);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> y(-30.0, 8.0);
  for (int i = 0; i < 2000; ++i) {
    const double t = y(rng);
    const double x = inverse_digamma(t);
    ASSERT_GT(x, 0.0);
    EXPECT_NEAR(digamma(x), t, 1e-10 * std::max(1.0, std::abs(t)));
  }
}

TEST(InverseDigamma, MatchesBisectionAtMinusTen) {
  // psi is increasing on (0, inf); bracket and bisect with boost's digamma.
  auto f = [](double x) { return boost::math::digamma(x) + 10.0; };
  boost::math::tools::eps_tolerance<double> tol(50);
  std::uintmax_t iters = 200;
  const auto [lo, hi] = boost::math::tools::bisect(f, 1e-3, 1.0, tol, iters);
  const double ref = 0.5 * (lo + hi);
  EXPECT_NEAR(inverse_digamma(-10.0), ref, 1e-12);
  EXPECT_LT(inverse_digamma(-10.0), 0.2);
}

TEST(InverseDigamma, Monotone) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> y(-20.0, 5.0);
  for (int i = 0; i < 500; ++i) {
    double a = y(rng), b = y(rng);
    if (a > b) std::swap(a, b);
    if (a == b) continue;
    EXPECT_LT(inverse_digamma(a), inverse_digamma(b));
  }
}
