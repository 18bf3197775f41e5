#pragma once

#include <map>
#include <optional>
#include <string>

#include "passmat/asymptotics.hpp"
#include "passmat/equilibrium.hpp"
#include "passmat/passthrough.hpp"

namespace passmat {

enum class LimitForm { None, LogitDiag, CesIdentity };

/// Percentage pass-through Psi^tau = p_hat^{-1} Psi c_hat, with the
/// demand-family limit benchmark (diag(1 - m_j) for logit, I for CES) and the
/// sup-norm deviation from it.
struct PercentageReport {
  Matrix psi_tau;
  LimitForm limit_form = LimitForm::None;
  Matrix limit_matrix;
  double deviation = std::numeric_limits<double>::quiet_NaN();
};

PercentageReport percentage_passthrough(const Matrix& psi, const Vector& p, const Vector& c,
                                        const DemandSpec* family = nullptr);

/// First-order consumer surplus change dCS = -R' Psi^tau dtau; when the limit
/// form is known, also the revenue-weighted reduced form.
struct CsDelta {
  double dcs;
  std::optional<double> reduced_form;
};

CsDelta consumer_surplus_delta(const Vector& revenues, const PercentageReport& rep,
                               const Vector& dtau);
double consumer_surplus_delta(const Vector& revenues, const Matrix& psi_tau, const Vector& dtau);

/// A merger as a pair of firm partitions, post coarsening pre.
struct MergerScenario {
  std::vector<std::vector<int>> pre_partition;
  std::vector<std::vector<int>> post_partition;
  Matrix omega_pre;
  Matrix omega_post;
  std::vector<int> affected;  // products whose ownership row changes
};

MergerScenario make_merger_scenario(int n_products,
                                    const std::vector<std::vector<int>>& pre_partition,
                                    const std::vector<std::vector<int>>& post_partition);

/// Upward pricing pressure g = (Lambda_pre - Lambda_post) m(p0); cross-checked
/// internally against the summation form. Warns on stderr when p0 is not an
/// equilibrium of the pre-merger market (residual > 1e-8).
Vector upp_vector(const Market& m, const Vector& p0, const MergerScenario& scen);

/// Pseudo-tax t solving Lambda_pre t = g.
Vector pseudo_tax(const Market& m, const Vector& p0, const MergerScenario& scen);

enum class MergerMethod { PreJacobian, JaffeWeyl, ThinTailDiag };

Vector merger_price_effects(const Market& m, const Vector& p0, const MergerScenario& scen,
                            MergerMethod method);

struct ResolveResult {
  Vector p_post;
  Vector dp_true;
  bool converged;
};

/// Ground truth: full Bertrand re-solve under the post partition from the
/// pre-merger equilibrium start.
ResolveResult resolve_post_merger(const Market& m, const MergerScenario& scen, const Vector& p0,
                                  const SolveOptions& opts = {});

struct MergerReport {
  Vector p0;
  Vector upp;
  Vector pseudo_tax;
  Vector dp_pretax;
  Vector dp_jw;
  Vector dp_thin_tail;
  Vector dp_true;
  Vector p_post;
  Matrix slope_diff;  // C(p0; Omega_post) - C(p0; Omega_pre)
  double jacobian_identity_gap;  // || (J_post - J_pre) - slope_diff ||_max
  std::map<std::string, double> errors_vs_true;  // method -> sup-norm gap
  bool resolve_converged;
};

MergerReport merger_report(const Market& m, const MergerScenario& scen,
                           const SolveOptions& opts = {});

/// Equilibrium of the wedge-scaled system f(p; Omega_pre) + eps g(p) = 0.
/// Test construction for convergence-order studies: only the perturbation is
/// scaled, never Omega itself. eps = 1 is the true post-merger system.
Vector solve_wedge_scaled(const Market& m, const MergerScenario& scen, double eps,
                          const Vector& p0, const SolveOptions& opts = {});

}  // namespace passmat
