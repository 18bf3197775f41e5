#pragma once

#include <map>
#include <vector>

#include "passmat/market.hpp"

namespace passmat {

/// Decomposition of the Jacobian of the normalized pricing system into the
/// baseline own-price slope, the curvature/substitution matrix K and the
/// ownership matrix C, plus its diagonal/off-diagonal split and the
/// interaction operator Gamma = -B A^{-1}.
struct JacobianDecomposition {
  Matrix j_f;
  Matrix k_mat;
  Matrix c_mat;
  Vector a_diag;           // A = -2I + K^diag + C^diag (diagonal entries)
  Matrix b_off;            // B = K^off + C^off
  Matrix gamma;            // -B A^{-1}
  double spectral_radius;  // rho(Gamma), direct eigensolve for J <= 64
  double sigma_max;        // largest singular value, power iteration on Gamma^T Gamma
  double inf_norm;         // ||Gamma||_inf
};

/// Lambda = -Omega o D, the ownership-internalized diversion matrix.
/// Unit diagonal; Lambda(j,l) = -Omega(j,l) D(j->l) off the diagonal.
Matrix lambda_matrix(const Market& m, const Vector& p);

JacobianDecomposition jacobian_decomposition(const Market& m, const Vector& p);

struct PassThroughReport {
  Matrix lambda;
  Matrix psi_exact;                     // -J_f^{-1} Lambda
  std::map<int, Matrix> psi_trunc;      // order K -> -A^{-1} (sum_{m<=K} Gamma^m) Lambda
  std::map<int, double> frobenius_errors;
  double rho_gamma;
  double gamma_inf_norm;
  double jf_condition;                  // 1-norm condition estimate of J_f
  bool neumann_divergent;               // rho(Gamma) >= 1; truncations still returned
};

/// Exact pass-through and Neumann truncations at the requested orders.
PassThroughReport exact_passthrough(const Market& m, const Vector& p,
                                    const std::vector<int>& orders);

/// Same series machinery with the within-firm blocks of J_f kept in the
/// leading term and only across-firm blocks treated as the perturbation.
PassThroughReport block_neumann(const Market& m, const Vector& p,
                                const std::vector<int>& orders);

/// Both sides of the geometric truncation bound
/// ||Psi_K - Psi||_inf <= ||A^{-1}||_inf ||Gamma||_inf^{K+1} / (1 - ||Gamma||_inf) ||Lambda||_inf.
struct NeumannBound {
  double truncation_error;
  double bound;
  bool holds;
};

NeumannBound neumann_bound_audit(const JacobianDecomposition& d, const Matrix& lambda, int order);

/// Directional stability report for one firm along a within-firm direction v:
/// slope S_f, weights M_j/M_f, stability ratio R_f, directional curvatures,
/// the stability margin 2R_f - kappa_f, and the profit second derivative
/// along v computed both analytically and by five-point differences.
struct DirectionalAnalysis {
  Vector v;
  double s_f;
  Vector m_j;
  double m_f;
  double r_f;
  Vector kappa_j;
  double kappa_f;
  double stability_margin;  // 2 R_f - kappa_f
  double phi_dd_analytic;   // v' Hess(Pi_f) v
  double phi_dd_fd;         // five-point stencil along p_f + t v
  Matrix w_f;               // -J_q^diag restricted to the firm
};

DirectionalAnalysis directional_analysis(const Market& m, int firm, const Vector& p,
                                         const Vector& v);

/// Residual of the directional-norm identity
/// ||dp_f||_W = v_hat' W_f Lambda_f dt / (M_f (2R_f - kappa_f))
/// for a small within-firm tax shock dt at a point where the firm's own FOC holds.
struct DirectionalIdentity {
  double lhs;
  double rhs;
  double rel_discrepancy;
  bool zero_shock;
};

DirectionalIdentity directional_identity_check(const Market& m, int firm, const Vector& p_star,
                                               const Vector& dt);

/// Within-firm profit Hessian of `firm` at p (rows/cols in firm product order).
Matrix firm_profit_hessian(const Market& m, int firm, const Vector& p, const DemandEval& ev);

}  // namespace passmat
