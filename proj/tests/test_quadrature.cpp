#include <doctest.h>

#include <cmath>

#include "passmat/quadrature.hpp"

using namespace passmat;

TEST_CASE("gauss-hermite integrates gaussian moments") {
  const QuadratureRule rule = gauss_hermite(32);
  // E[x^k] under N(0,1) via x = sqrt(2) t
  double m0 = 0, m2 = 0, m4 = 0;
  for (int i = 0; i < rule.nodes.size(); ++i) {
    const double x = std::sqrt(2.0) * rule.nodes[i];
    m0 += rule.normalized[i];
    m2 += rule.normalized[i] * x * x;
    m4 += rule.normalized[i] * x * x * x * x;
  }
  CHECK(m0 == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(m2 == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(m4 == doctest::Approx(3.0).epsilon(1e-13));
}

TEST_CASE("gauss-hermite reproduces the lognormal mean") {
  const QuadratureRule rule = gauss_hermite(64);
  const double mu = -0.3, sigma = 0.7;
  double mean = 0;
  for (int i = 0; i < rule.nodes.size(); ++i)
    mean += rule.normalized[i] * std::exp(mu + std::sqrt(2.0) * sigma * rule.nodes[i]);
  CHECK(mean == doctest::Approx(std::exp(mu + 0.5 * sigma * sigma)).epsilon(1e-12));
}

TEST_CASE("generalized gauss-laguerre matches gamma moments") {
  // weight u^{r-1} e^{-u}: normalized rule is the Gamma(r,1) distribution
  for (double r : {0.7, 1.0, 2.5}) {
    const QuadratureRule rule = gauss_generalized_laguerre(48, r - 1.0);
    double m1 = 0, m2 = 0;
    for (int i = 0; i < rule.nodes.size(); ++i) {
      m1 += rule.normalized[i] * rule.nodes[i];
      m2 += rule.normalized[i] * rule.nodes[i] * rule.nodes[i];
    }
    CHECK(m1 == doctest::Approx(r).epsilon(1e-12));
    CHECK(m2 == doctest::Approx(r * (r + 1.0)).epsilon(1e-12));
  }
}

TEST_CASE("laguerre total mass is Gamma(a+1)") {
  const QuadratureRule rule = gauss_generalized_laguerre(16, 1.5);
  CHECK(rule.weights.sum() == doctest::Approx(std::tgamma(2.5)).epsilon(1e-12));
}

TEST_CASE("invalid quadrature parameters throw") {
  CHECK_THROWS_AS(gauss_hermite(0), QuadratureFailure);
  CHECK_THROWS_AS(gauss_generalized_laguerre(8, -1.0), QuadratureFailure);
}
