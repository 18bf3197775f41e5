#pragma once

#include "passmat/market.hpp"

namespace passmat {

struct SolveOptions {
  double tol = 1e-10;    // on ||f||_inf
  int max_iter = 200;
  double damping = 1.0;  // initial Newton step scale
};

struct EquilibriumResult {
  Vector p_star;
  double residual_norm;  // sup-norm of f at p_star
  int iterations;
  bool converged;
  bool soc_ok;
};

/// Stacked first-order conditions F(p) = q(p) + (Omega o J_q') (p - c).
Vector foc_residual(const Market& m, const Vector& p);

/// Normalized system f(p) = -(J_q^diag)^{-1} F(p), quasilinear in marginal
/// cost: f_j = -q_j/q_{j,j} - (p_j - c_j) + sum_{l!=j} Omega_jl (p_l - c_l) D_{j->l}.
Vector normalized_foc(const Market& m, const Vector& p);

/// Damped Newton on f with the analytic Jacobian; falls back to a damped
/// fixed point on the markup map when Newton cannot make progress.
EquilibriumResult solve_bertrand(const Market& m, const Vector& p0, const SolveOptions& opts = {});
EquilibriumResult solve_bertrand(const Market& m, const SolveOptions& opts = {});

/// Start heuristic: c + 1/(alpha(1 - 1/(J+1))) for the logit family,
/// c sigma/(sigma-1) for CES, 1.5 c otherwise.
Vector default_start(const Market& m);

struct FirmSocReport {
  int firm;
  double max_eigenvalue;         // of the within-firm profit Hessian
  bool ok;                       // max eigenvalue <= 1e-8
  double min_directional_margin; // min over sampled directions of 2R_f - kappa_f
};

struct SocReport {
  std::vector<FirmSocReport> firms;
  bool all_ok;
};

/// Second-order diagnostics: per-firm profit-Hessian eigenvalues plus the
/// directional margin over sampled regular unit directions.
SocReport soc_check(const Market& m, const Vector& p, int n_directions = 32,
                    std::uint64_t seed = 271828);

struct Margins {
  Vector absolute;  // p - c
  Vector relative;  // (p - c) / p
};

Margins margins(const Market& m, const Vector& p);

}  // namespace passmat
