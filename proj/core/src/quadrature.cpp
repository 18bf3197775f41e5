#include "passmat/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace passmat {

namespace {

// Golub-Welsch: nodes are eigenvalues of the symmetric tridiagonal Jacobi
// matrix, normalized weights the squared first eigenvector components.
QuadratureRule golub_welsch(const Vector& diag, const Vector& offdiag, double total_mass) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver;
  solver.computeFromTridiagonal(diag, offdiag, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) {
    throw QuadratureFailure("tridiagonal eigensolve failed in Golub-Welsch");
  }
  QuadratureRule rule;
  rule.nodes = solver.eigenvalues();
  rule.normalized = solver.eigenvectors().row(0).array().square();
  rule.weights = rule.normalized * total_mass;
  return rule;
}

}  // namespace

QuadratureRule gauss_hermite(int n) {
  if (n < 1) throw QuadratureFailure("gauss_hermite: need n >= 1");
  Vector diag = Vector::Zero(n);
  Vector off(n - 1);
  for (int k = 1; k < n; ++k) off[k - 1] = std::sqrt(k / 2.0);
  return golub_welsch(diag, off, std::sqrt(M_PI));
}

QuadratureRule gauss_generalized_laguerre(int n, double a) {
  if (n < 1) throw QuadratureFailure("gauss_generalized_laguerre: need n >= 1");
  if (a <= -1.0) throw QuadratureFailure("gauss_generalized_laguerre: need a > -1");
  Vector diag(n);
  Vector off(n - 1);
  for (int k = 0; k < n; ++k) diag[k] = 2.0 * k + a + 1.0;
  for (int k = 1; k < n; ++k) off[k - 1] = std::sqrt(k * (k + a));
  return golub_welsch(diag, off, std::tgamma(a + 1.0));
}

}  // namespace passmat
