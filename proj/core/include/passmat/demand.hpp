#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "passmat/types.hpp"

namespace passmat {

// ---------------------------------------------------------------------------
// Demand specifications
// ---------------------------------------------------------------------------

/// Multinomial logit with an outside option:
///   q_j = M exp(delta_j - alpha p_j) / (1 + sum_l exp(delta_l - alpha p_l)).
struct Logit {
  double alpha = 1.0;   // price coefficient, > 0
  Vector delta;         // mean utilities
  double scale_M = 1.0; // market size, > 0
};

/// Two-level nested logit, utility delta_j - alpha p_j, nesting parameter
/// sigma_nest in [0,1). nest_of maps product -> nest id.
struct NestedLogit {
  double alpha = 1.0;
  double sigma_nest = 0.0;
  std::vector<int> nest_of;
  Vector delta;
  double scale_M = 1.0;
};

/// CES demand with outside option:
///   q_j = (B/p_j) exp(delta_j - (sigma-1) log p_j) / (1 + sum_l exp(...)).
struct Ces {
  double sigma_ces = 2.0; // elasticity parameter, > 1
  Vector delta;
  double budget_B = 1.0;  // expenditure, > 0
};

struct LogNormalMixing {
  double mu = 0.0;
  double sigma_ln = 1.0; // > 0
};

struct GammaMixing {
  double shape_r = 1.0;  // > 0
  double rate_beta = 1.0; // > 0
};

/// Mixed logit: conditional logit with random price coefficient alpha,
/// integrated by quadrature (Gauss-Hermite for log-normal mixing,
/// generalized Gauss-Laguerre for gamma mixing).
struct MixedLogit {
  std::variant<LogNormalMixing, GammaMixing> mixing;
  Vector delta;
  double scale_M = 1.0;
  int quad_nodes = 64;
};

/// Linear demand q_j = gamma_j - sum_l beta_jl p_l, beta_jj > 0.
struct Linear {
  Vector gamma_vec;
  Matrix beta_mat;
};

/// LA/AIDS with Stone price index:
///   w_j = alpha_j + sum_l gamma_jl log p_l + beta_j log(B / P^S),
///   log P^S = sum_l omega_l log p_l,  q_j = (B/p_j) w_j.
struct Aids {
  Vector alpha_vec;
  Matrix gamma_mat;
  Vector beta_vec;
  Vector stone_weights; // sum to 1
  double budget_B = 1.0;
};

using DemandSpec = std::variant<Logit, NestedLogit, Ces, MixedLogit, Linear, Aids>;

int n_products(const DemandSpec& spec);
bool is_logit_family(const DemandSpec& spec); // Logit, NestedLogit, MixedLogit
/// Throws InvalidDemandSpec when a parameter invariant is violated.
void validate(const DemandSpec& spec);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Demand levels with analytic first and second price derivatives.
/// jac(j,k) = dq_j/dp_k, hess[j](k,l) = d^2 q_j / dp_k dp_l.
struct DemandEval {
  Vector q;
  Matrix jac;
  std::vector<Matrix> hess;
};

DemandEval eval_demand(const DemandSpec& spec, const Vector& p);

/// Objects derived from a DemandEval: shares (quantity shares for the logit
/// family, expenditure shares for CES/AIDS, raw quantities for linear),
/// semi-elasticities eta_jk = d log q_j / d p_k, own elasticities
/// eps_jj = p_j eta_jj, diversion D(j,l) = -q_{l,j}/q_{j,j} and the
/// own-slope ratio delta(j,k) = -q_{j,k}/q_{j,j}.
struct DerivedDemand {
  Vector shares;
  Matrix eta;
  Vector eps_own;
  Matrix diversion;
  Matrix delta_ratio;
};

DerivedDemand derived_demand(const DemandSpec& spec, const Vector& p);
DerivedDemand derived_from_eval(const DemandSpec& spec, const Vector& p, const DemandEval& ev);

/// Price curvature index kappa^j_{kl} = q_j q_{j,kl} / (q_{j,k} q_{j,l});
/// kappa^j_{jj} is the Bulow-Pfleiderer index.
double curvature_index(const DemandSpec& spec, const Vector& p, int j, int k, int l);

/// Max relative error (scaled by the largest analytic entry) of the analytic
/// jacobian vs central differences of q, and of the hessians vs central
/// differences of the jacobian.
struct FdAuditReport {
  double jac_rel_err;
  double hess_rel_err;
};

FdAuditReport fd_derivative_audit(const DemandSpec& spec, const Vector& p, double step);

}  // namespace passmat
