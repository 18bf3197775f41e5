#pragma once

#include "passmat/types.hpp"

namespace passmat {

/// Nodes and weights of a Gaussian rule. `weights` integrate against the raw
/// weight function; `normalized` divides by its total mass so the weights sum
/// to one (probability form).
struct QuadratureRule {
  Vector nodes;
  Vector weights;
  Vector normalized;
};

/// Gauss-Hermite rule for the weight e^{-x^2} on (-inf, inf). Total mass sqrt(pi).
QuadratureRule gauss_hermite(int n);

/// Generalized Gauss-Laguerre rule for the weight x^a e^{-x} on (0, inf),
/// a > -1. Total mass Gamma(a + 1).
QuadratureRule gauss_generalized_laguerre(int n, double a);

}  // namespace passmat
