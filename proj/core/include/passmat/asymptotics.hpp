#pragma once

#include <optional>
#include <vector>

#include "passmat/market.hpp"

namespace passmat {

/// The two semi-elasticity identities for the single-product-firm pricing
/// Jacobian: diag_j = -1 + d_j eta_jj / eta_jj^2 (= -2 + kappa^j_jj) and
/// offdiag(j,k) = d_j eta_jk / eta_jj^2 (= delta_jk (1 - kappa^j_kj)).
/// dual_gap is the largest discrepancy between the two computation routes.
struct SemiElasticityForm {
  Vector diag;
  Matrix offdiag;
  double dual_gap;
};

SemiElasticityForm semi_elasticity_form(const DemandSpec& spec, const Vector& p);

enum class TailClass { Thin, Fat, FiniteChoke };

/// Limiting normalized Jacobian coefficients: diag -> -1 + a_j,
/// offdiag -> b_jk, and rho_jk = lim of the normalized cross semi-elasticity
/// eta_jk / (-eta_jj). tail_class: Thin (|a| < 1e-3), Fat (a > 0),
/// FiniteChoke (a < 0).
struct TailCoefficients {
  Vector a;
  Matrix b;
  Matrix rho;
  std::vector<TailClass> tail_class;
  Vector a_convergence;  // per-product remaining-error estimate for a
  double b_convergence;
};

/// price sequence along which shares vanish: a ray lambda_n * base_p or a
/// boundary path driving one product's demand/share to zero.
struct RaySequence {
  enum class Kind { Ray, Boundary };
  Kind kind = Kind::Ray;
  Vector base_p;
  std::vector<double> lambdas;
  std::vector<Vector> points;
  int boundary_product = -1;
};

std::vector<double> default_ray_lambdas(double lambda_max = 1e4);
RaySequence make_ray_sequence(const Vector& base_p, const std::vector<double>& lambdas);

/// Boundary path for linear demand: move p_j toward the choke price along
/// +e_j, closing a fraction `approach` of the remaining gap at each step.
RaySequence linear_boundary_sequence(const Linear& d, int j, const Vector& start_p, int n_points,
                                     double approach = 0.5);

/// Boundary path for AIDS: scale the whole price vector by lambda_n solved so
/// the target product's expenditure share halves each step; all price ratios
/// stay at the base ratios (which therefore supply cbar).
RaySequence aids_boundary_sequence(const Aids& d, int j, const Vector& base_p, int n_points);

/// Evaluates the semi-elasticity form along the sequence and extrapolates the
/// last three points (Aitken; falls back to the last value when the increment
/// ratio indicates slower-than-geometric convergence).
TailCoefficients estimate_tail_coefficients(const DemandSpec& spec, const RaySequence& seq);

/// What each closed-form row needs: a ray base point (gamma mixed logit) or
/// the limiting price ratios (AIDS).
struct LimitContext {
  std::optional<Vector> base_p;
  std::optional<Matrix> cbar;
};

TailCoefficients theoretical_limit(const DemandSpec& spec, const LimitContext& ctx = {});

/// Market-interaction corrections of the gamma mixed-logit ray limit:
/// zeta_j = -(p_j/r) d_j log C_j, chi_j = (p_j^2/r) d_jj log C_j,
/// xi_jk = (p_j^2/r) d_jk log C_j, with C_j the Laguerre-weighted integral of
/// the conditional choice-denominator factor along the ray.
struct GammaCorrections {
  Vector zeta;
  Vector chi;
  Matrix xi;
};

GammaCorrections gamma_corrections(const MixedLogit& spec, const Vector& base_p);

/// Closed-form local paths implied by tail coefficients: own semi-elasticity
/// path E_j(t), demand path Q_j(t), cross path G_jk(t).
struct LocalPaths {
  Vector t_grid;
  Matrix e_path;               // J x T
  Matrix q_path;               // J x T
  std::vector<Matrix> g_path;  // per product j: J x T, row k (k != j)
};

LocalPaths limit_paths(const TailCoefficients& coeffs, const Vector& t_grid,
                       const Matrix* rho = nullptr);

/// Empirical counterparts at the largest sequence point, for comparison with
/// the closed forms.
struct EmpiricalPaths {
  Vector t_grid;
  Matrix e_path;
  Matrix q_path;
};

EmpiricalPaths empirical_paths(const DemandSpec& spec, const RaySequence& seq,
                               const Vector& t_grid);

/// Inputs of the nested-logit block limit: nesting parameter, product->nest
/// map, and the limiting within-nest shares.
struct NestedLimitInput {
  double sigma;
  std::vector<int> nest_of;
  Vector sbar;
};

/// Closed-form block-diagonal limit objects of the nested-logit benchmark.
struct NestedLimit {
  Matrix jd_star;              // demand-side Jacobian limit
  Matrix d_star;               // diversion limit
  Matrix lambda_star;          // -Omega o D*
  Matrix c_star;               // ownership term limit
  Matrix psi_star;             // -(J^{d,*} + C*)^{-1} Lambda*
  Vector markups_bar;          // limiting margins, per product
  Vector b_star;               // B_j* = 1 - sigma sbar_j
  std::vector<Matrix> gamma3;  // gamma3[j](l,k) = limit of dD_{j->l}/dp_k
};

NestedLimit nested_logit_limit(const NestedLimitInput& input, const Matrix& omega);

/// Elasticity-based diagonal benchmark diag((1 + 1/eps_jj)^{-1}); products with
/// eps_jj >= -1 are flagged, not fatal.
struct ThinTailDiag {
  Vector diag;
  std::vector<bool> inelastic;
  std::vector<std::string> covered_families;
};

ThinTailDiag thin_tail_diag_approx(const Market& m, const Vector& p);

}  // namespace passmat
