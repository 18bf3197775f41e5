#include "passmat/passthrough.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "passmat/equilibrium.hpp"

namespace passmat {

namespace {

double inf_norm_of(const Matrix& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

double power_iteration_sigma_max(const Matrix& g) {
  const int J = static_cast<int>(g.rows());
  Vector x = Vector::Constant(J, 1.0 / std::sqrt(static_cast<double>(J)));
  double sigma = 0.0;
  for (int it = 0; it < 500; ++it) {
    Vector y = g.transpose() * (g * x);
    const double n = y.norm();
    if (n == 0.0) return 0.0;
    y /= n;
    const double next = std::sqrt(n);
    if (std::abs(next - sigma) <= 1e-13 * std::max(1.0, next) && it > 2) return next;
    sigma = next;
    x = y;
  }
  return sigma;
}

double spectral_radius_of(const Matrix& g) {
  if (g.rows() <= 64) {
    Eigen::EigenSolver<Matrix> es(g, /*computeEigenvectors=*/false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  // power iteration on Gamma itself; adequate for the simulation scale
  const int J = static_cast<int>(g.rows());
  Vector x = Vector::Constant(J, 1.0 / std::sqrt(static_cast<double>(J)));
  double lambda = 0.0;
  for (int it = 0; it < 1000; ++it) {
    Vector y = g * x;
    const double n = y.norm();
    if (n == 0.0) return 0.0;
    y /= n;
    const double next = std::abs(y.dot(g * y));
    if (std::abs(next - lambda) <= 1e-12 * std::max(1.0, next) && it > 2) return next;
    lambda = next;
    x = y;
  }
  return lambda;
}

Matrix truncated_series(const Matrix& gamma, int order) {
  const int J = static_cast<int>(gamma.rows());
  Matrix sum = Matrix::Identity(J, J);
  Matrix pow = Matrix::Identity(J, J);
  for (int k = 1; k <= order; ++k) {
    pow = pow * gamma;
    sum += pow;
  }
  return sum;
}

struct LuWithCondition {
  Eigen::PartialPivLU<Matrix> lu;
  double condition;
};

LuWithCondition factorize(const Matrix& a, const char* what) {
  LuWithCondition out{Eigen::PartialPivLU<Matrix>(a), 0.0};
  const double rcond = out.lu.rcond();
  out.condition = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  if (!(out.condition < 1e12)) {
    throw SingularJacobian(std::string(what) + ": condition estimate " +
                           std::to_string(out.condition) + " exceeds 1e12");
  }
  return out;
}

}  // namespace

Matrix lambda_matrix(const Market& m, const Vector& p) {
  const DerivedDemand dd = derived_demand(m.demand, p);
  const int J = m.n_products;
  Matrix lambda(J, J);
  for (int j = 0; j < J; ++j)
    for (int l = 0; l < J; ++l)
      lambda(j, l) = (j == l) ? 1.0 : -m.omega(j, l) * dd.diversion(j, l);
  return lambda;
}

JacobianDecomposition jacobian_decomposition(const Market& m, const Vector& p) {
  const int J = m.n_products;
  const DemandEval ev = eval_demand(m.demand, p);
  const Vector margin = p - m.cost;

  JacobianDecomposition d;
  d.k_mat.resize(J, J);
  d.c_mat.resize(J, J);

  for (int j = 0; j < J; ++j) {
    const double own = ev.jac(j, j);
    if (own == 0.0)
      throw SingularOwnSlope("own slope of product " + std::to_string(j) + " is zero");
    for (int k = 0; k < J; ++k) {
      if (k == j) {
        d.k_mat(j, j) = ev.q[j] * ev.hess[j](j, j) / (own * own);
      } else {
        // delta_jk (1 - kappa^j_{kj}) expanded so a vanishing cross slope is harmless
        d.k_mat(j, k) = -ev.jac(j, k) / own + ev.q[j] * ev.hess[j](k, j) / (own * own);
      }
    }
  }

  for (int j = 0; j < J; ++j) {
    const double own = ev.jac(j, j);
    for (int k = 0; k < J; ++k) {
      double acc = 0.0;
      for (int l = 0; l < J; ++l) {
        if (l == j || m.omega(j, l) == 0.0) continue;
        const double dD = -ev.hess[l](j, k) / own + ev.jac(l, j) * ev.hess[j](j, k) / (own * own);
        acc += m.omega(j, l) * margin[l] * dD;
      }
      if (k == j) {
        d.c_mat(j, k) = acc;
      } else {
        const double div_jk = -ev.jac(k, j) / own;
        d.c_mat(j, k) = m.omega(j, k) * div_jk + acc;
      }
    }
  }

  d.j_f = -2.0 * Matrix::Identity(J, J) + d.k_mat + d.c_mat;

  d.a_diag = d.j_f.diagonal();
  d.b_off = d.j_f;
  d.b_off.diagonal().setZero();

  for (int j = 0; j < J; ++j) {
    if (d.a_diag[j] == 0.0)
      throw SingularA("diagonal entry A(" + std::to_string(j) +
                      ") vanishes; interaction operator undefined");
  }
  d.gamma = -d.b_off * d.a_diag.cwiseInverse().asDiagonal();
  d.spectral_radius = spectral_radius_of(d.gamma);
  d.sigma_max = power_iteration_sigma_max(d.gamma);
  d.inf_norm = inf_norm_of(d.gamma);
  return d;
}

PassThroughReport exact_passthrough(const Market& m, const Vector& p,
                                    const std::vector<int>& orders) {
  PassThroughReport rep;
  rep.lambda = lambda_matrix(m, p);
  const JacobianDecomposition d = jacobian_decomposition(m, p);

  const LuWithCondition lu = factorize(d.j_f, "pass-through Jacobian");
  rep.psi_exact = -lu.lu.solve(rep.lambda);
  rep.jf_condition = lu.condition;
  rep.rho_gamma = d.spectral_radius;
  rep.gamma_inf_norm = d.inf_norm;
  rep.neumann_divergent = d.spectral_radius >= 1.0;

  const Matrix a_inv = d.a_diag.cwiseInverse().asDiagonal();
  const double psi_frob = rep.psi_exact.norm();
  for (int K : orders) {
    Matrix psi_k = -a_inv * truncated_series(d.gamma, K) * rep.lambda;
    rep.frobenius_errors[K] = (psi_k - rep.psi_exact).norm() / psi_frob;
    rep.psi_trunc[K] = std::move(psi_k);
  }
  return rep;
}

PassThroughReport block_neumann(const Market& m, const Vector& p, const std::vector<int>& orders) {
  const int J = m.n_products;
  PassThroughReport rep;
  rep.lambda = lambda_matrix(m, p);
  const JacobianDecomposition d = jacobian_decomposition(m, p);

  // within-firm blocks of J_f as the leading term; omega is the same-firm mask
  const Matrix a_blk = d.j_f.cwiseProduct(m.omega);
  const Matrix b_blk = d.j_f - a_blk;

  Eigen::PartialPivLU<Matrix> lu_a(a_blk);
  const double rcond = lu_a.rcond();
  if (!(rcond > 1e-12))
    throw SingularBlock("block-diagonal leading term is numerically singular");
  const Matrix a_inv = lu_a.solve(Matrix::Identity(J, J));
  const Matrix gamma = -b_blk * a_inv;

  const LuWithCondition lu = factorize(d.j_f, "pass-through Jacobian");
  rep.psi_exact = -lu.lu.solve(rep.lambda);
  rep.jf_condition = lu.condition;
  rep.rho_gamma = spectral_radius_of(gamma);
  rep.gamma_inf_norm = inf_norm_of(gamma);
  rep.neumann_divergent = rep.rho_gamma >= 1.0;

  const double psi_frob = rep.psi_exact.norm();
  for (int K : orders) {
    Matrix psi_k = -a_inv * truncated_series(gamma, K) * rep.lambda;
    rep.frobenius_errors[K] = (psi_k - rep.psi_exact).norm() / psi_frob;
    rep.psi_trunc[K] = std::move(psi_k);
  }
  return rep;
}

NeumannBound neumann_bound_audit(const JacobianDecomposition& d, const Matrix& lambda, int order) {
  const double g = d.inf_norm;
  if (!(g < 1.0))
    throw BoundInapplicable("||Gamma||_inf = " + std::to_string(g) + " is not below 1");
  const Matrix a_inv = d.a_diag.cwiseInverse().asDiagonal();
  const Matrix psi = -Eigen::PartialPivLU<Matrix>(d.j_f).solve(lambda);
  const Matrix psi_k = -a_inv * truncated_series(d.gamma, order) * lambda;

  NeumannBound out;
  out.truncation_error = inf_norm_of(psi_k - psi);
  out.bound = inf_norm_of(a_inv) * std::pow(g, order + 1) / (1.0 - g) * inf_norm_of(lambda);
  out.holds = out.truncation_error <= out.bound * (1.0 + 1e-12);
  return out;
}

Matrix firm_profit_hessian(const Market& m, int firm, const Vector& p, const DemandEval& ev) {
  const auto& idx = m.firms.at(firm);
  const int n = static_cast<int>(idx.size());
  Matrix jq(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) jq(a, b) = ev.jac(idx[a], idx[b]);
  Matrix hess = jq + jq.transpose();
  for (int l = 0; l < n; ++l) {
    const double margin = p[idx[l]] - m.cost[idx[l]];
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) hess(a, b) += margin * ev.hess[idx[l]](idx[a], idx[b]);
  }
  return hess;
}

DirectionalAnalysis directional_analysis(const Market& m, int firm, const Vector& p,
                                         const Vector& v) {
  const auto& idx = m.firms.at(firm);
  const int n = static_cast<int>(idx.size());
  if (v.size() != n) throw DimensionMismatch("direction length does not match firm size");
  const DemandEval ev = eval_demand(m.demand, p);

  Vector dphi(n), ddphi(n), q(n), margin(n);
  for (int a = 0; a < n; ++a) {
    const int j = idx[a];
    q[a] = ev.q[j];
    margin[a] = p[j] - m.cost[j];
    double acc = 0.0;
    for (int b = 0; b < n; ++b) acc += ev.jac(j, idx[b]) * v[b];
    dphi[a] = acc;
    double acc2 = 0.0;
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) acc2 += v[b] * ev.hess[j](idx[b], idx[c]) * v[c];
    ddphi[a] = acc2;
  }
  for (int a = 0; a < n; ++a) {
    if (std::abs(dphi[a]) < 1e-10)
      throw RegularityViolation("direction is not regular: product " + std::to_string(idx[a]) +
                                " has directional slope " + std::to_string(dphi[a]));
  }

  DirectionalAnalysis out;
  out.v = v;

  Matrix jq(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) jq(a, b) = ev.jac(idx[a], idx[b]);
  out.s_f = -v.dot(jq * v);

  out.m_j.resize(n);
  out.kappa_j.resize(n);
  for (int a = 0; a < n; ++a) {
    out.m_j[a] = margin[a] * dphi[a] * dphi[a] / q[a];
    out.kappa_j[a] = q[a] * ddphi[a] / (dphi[a] * dphi[a]);
  }
  out.m_f = out.m_j.sum();
  if (out.m_f == 0.0) throw ZeroWeight("directional weight M_f vanishes; ratios undefined");
  out.r_f = out.s_f / out.m_f;
  out.kappa_f = 0.0;
  for (int a = 0; a < n; ++a) out.kappa_f += out.m_j[a] / out.m_f * out.kappa_j[a];
  out.stability_margin = 2.0 * out.r_f - out.kappa_f;

  out.phi_dd_analytic = v.dot(firm_profit_hessian(m, firm, p, ev) * v);

  // five-point stencil of Pi_f along p_f + t v
  const double h = 1e-3 * (1.0 + p.cwiseAbs().maxCoeff()) / std::max(1.0, v.cwiseAbs().maxCoeff());
  auto profit_at = [&](double t) {
    Vector pt = p;
    for (int a = 0; a < n; ++a) pt[idx[a]] += t * v[a];
    const DemandEval e = eval_demand(m.demand, pt);
    double pi = 0.0;
    for (int a = 0; a < n; ++a) pi += (pt[idx[a]] - m.cost[idx[a]]) * e.q[idx[a]];
    return pi;
  };
  out.phi_dd_fd = (-profit_at(2 * h) + 16.0 * profit_at(h) - 30.0 * profit_at(0.0) +
                   16.0 * profit_at(-h) - profit_at(-2 * h)) /
                  (12.0 * h * h);

  out.w_f = Matrix::Zero(n, n);
  for (int a = 0; a < n; ++a) out.w_f(a, a) = -ev.jac(idx[a], idx[a]);
  return out;
}

DirectionalIdentity directional_identity_check(const Market& m, int firm, const Vector& p_star,
                                               const Vector& dt) {
  const auto& idx = m.firms.at(firm);
  const int n = static_cast<int>(idx.size());
  if (dt.size() != n) throw DimensionMismatch("tax shock length does not match firm size");

  DirectionalIdentity out{0.0, 0.0, 0.0, false};
  if (dt.cwiseAbs().maxCoeff() == 0.0) {
    out.zero_shock = true;
    return out;
  }

  const JacobianDecomposition d = jacobian_decomposition(m, p_star);
  const Matrix lambda = lambda_matrix(m, p_star);
  Matrix jf_ff(n, n), lambda_f(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      jf_ff(a, b) = d.j_f(idx[a], idx[b]);
      lambda_f(a, b) = lambda(idx[a], idx[b]);
    }
  const Vector dp = Eigen::PartialPivLU<Matrix>(jf_ff).solve(-(lambda_f * dt));

  const DemandEval ev = eval_demand(m.demand, p_star);
  Matrix w = Matrix::Zero(n, n);
  for (int a = 0; a < n; ++a) w(a, a) = -ev.jac(idx[a], idx[a]);

  const double dp_norm = std::sqrt(dp.dot(w * dp));
  const Vector v_hat = dp / dp_norm;
  const DirectionalAnalysis da = directional_analysis(m, firm, p_star, v_hat);

  const double den = da.m_f * da.stability_margin;
  if (std::abs(den) < 1e-10)
    throw DegenerateDenominator("M_f (2R_f - kappa_f) is numerically zero");

  out.lhs = dp_norm;
  out.rhs = v_hat.dot(w * (lambda_f * dt)) / den;
  out.rel_discrepancy = std::abs(out.lhs - out.rhs) / std::max(std::abs(out.lhs), std::abs(out.rhs));
  return out;
}

}  // namespace passmat
