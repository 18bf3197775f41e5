#include "passmat/applications.hpp"

#include <cmath>
#include <iostream>

namespace passmat {

namespace {

Market with_partition(const Market& m, const std::vector<std::vector<int>>& partition) {
  return build_market(m.cost, partition, m.demand, m.label);
}

void require_consistent_pre(const Market& m, const MergerScenario& scen) {
  if (m.omega.rows() != scen.omega_pre.rows() ||
      (m.omega - scen.omega_pre).cwiseAbs().maxCoeff() > 0.0)
    throw InputError("scenario pre-merger partition does not match the market's ownership");
}

}  // namespace

PercentageReport percentage_passthrough(const Matrix& psi, const Vector& p, const Vector& c,
                                        const DemandSpec* family) {
  const int J = static_cast<int>(p.size());
  for (int j = 0; j < J; ++j)
    if (!(p[j] > 0.0) || !(c[j] > 0.0))
      throw NonPositivePriceOrCost("price and cost must be strictly positive (product " +
                                   std::to_string(j) + ")");
  PercentageReport rep;
  rep.psi_tau = p.cwiseInverse().asDiagonal() * psi * c.asDiagonal();

  if (family) {
    if (std::holds_alternative<Logit>(*family)) {
      rep.limit_form = LimitForm::LogitDiag;
      rep.limit_matrix = (c.array() / p.array()).matrix().asDiagonal();  // diag(1 - m_j)
    } else if (std::holds_alternative<Ces>(*family)) {
      rep.limit_form = LimitForm::CesIdentity;
      rep.limit_matrix = Matrix::Identity(J, J);
    }
    if (rep.limit_form != LimitForm::None)
      rep.deviation = (rep.psi_tau - rep.limit_matrix).cwiseAbs().rowwise().sum().maxCoeff();
  }
  return rep;
}

double consumer_surplus_delta(const Vector& revenues, const Matrix& psi_tau, const Vector& dtau) {
  if (revenues.size() != psi_tau.rows() || dtau.size() != psi_tau.cols())
    throw DimensionMismatch("consumer_surplus_delta: dimensions disagree");
  return -revenues.dot(psi_tau * dtau);
}

CsDelta consumer_surplus_delta(const Vector& revenues, const PercentageReport& rep,
                               const Vector& dtau) {
  CsDelta out;
  out.dcs = consumer_surplus_delta(revenues, rep.psi_tau, dtau);
  if (rep.limit_form != LimitForm::None)
    out.reduced_form = -revenues.dot(rep.limit_matrix * dtau);
  return out;
}

MergerScenario make_merger_scenario(int n_products,
                                    const std::vector<std::vector<int>>& pre_partition,
                                    const std::vector<std::vector<int>>& post_partition) {
  MergerScenario scen;
  scen.pre_partition = pre_partition;
  scen.post_partition = post_partition;
  scen.omega_pre = ownership_from_partition(n_products, pre_partition);
  scen.omega_post = ownership_from_partition(n_products, post_partition);

  // mergers only coarsen: each pre-merger firm sits inside one post-merger firm
  for (const auto& firm : pre_partition) {
    std::vector<int> post_owner_of(n_products, -1);
    for (std::size_t f = 0; f < post_partition.size(); ++f)
      for (int j : post_partition[f]) post_owner_of[j] = static_cast<int>(f);
    for (int j : firm)
      if (post_owner_of[j] != post_owner_of[firm.front()])
        throw InvalidPartition("post-merger partition splits a pre-merger firm");
  }

  for (int j = 0; j < n_products; ++j) {
    if ((scen.omega_post.row(j) - scen.omega_pre.row(j)).cwiseAbs().sum() > 0.0)
      scen.affected.push_back(j);
  }
  return scen;
}

Vector upp_vector(const Market& m, const Vector& p0, const MergerScenario& scen) {
  require_consistent_pre(m, scen);
  const double residual = foc_residual(m, p0).cwiseAbs().maxCoeff();
  if (residual > 1e-8)
    std::cerr << "passmat: warning: upp_vector evaluated away from equilibrium (residual "
              << residual << ")\n";

  const DerivedDemand dd = derived_demand(m.demand, p0);
  const Vector margin = p0 - m.cost;
  const int J = m.n_products;

  // matrix form (Lambda_pre - Lambda_post) m == ((Omega_post - Omega_pre) o D) m
  Vector g = Vector::Zero(J);
  for (int j = 0; j < J; ++j)
    for (int l = 0; l < J; ++l)
      if (l != j)
        g[j] += (scen.omega_post(j, l) - scen.omega_pre(j, l)) * dd.diversion(j, l) * margin[l];

  // summation form, term by term
  Vector g_sum = Vector::Zero(J);
  for (int j = 0; j < J; ++j)
    for (int l = 0; l < J; ++l)
      if (l != j)
        g_sum[j] +=
            (scen.omega_post(j, l) - scen.omega_pre(j, l)) * margin[l] * dd.diversion(j, l);
  if ((g - g_sum).cwiseAbs().maxCoeff() > 1e-12)
    throw NonConvergent("UPP matrix and summation forms disagree");
  return g;
}

Vector pseudo_tax(const Market& m, const Vector& p0, const MergerScenario& scen) {
  const Vector g = upp_vector(m, p0, scen);
  const Matrix lambda_pre = lambda_matrix(m, p0);
  Eigen::PartialPivLU<Matrix> lu(lambda_pre);
  if (!(lu.rcond() > 1e-12))
    throw SingularLambdaPre("pre-merger Lambda is numerically singular");
  return lu.solve(g);
}

Vector merger_price_effects(const Market& m, const Vector& p0, const MergerScenario& scen,
                            MergerMethod method) {
  const Vector g = upp_vector(m, p0, scen);
  switch (method) {
    case MergerMethod::PreJacobian: {
      const JacobianDecomposition d = jacobian_decomposition(m, p0);
      return -Eigen::PartialPivLU<Matrix>(d.j_f).solve(g);
    }
    case MergerMethod::JaffeWeyl: {
      const Market post = with_partition(m, scen.post_partition);
      const JacobianDecomposition d = jacobian_decomposition(post, p0);
      return -Eigen::PartialPivLU<Matrix>(d.j_f).solve(g);
    }
    case MergerMethod::ThinTailDiag: {
      const Vector t = pseudo_tax(m, p0, scen);
      const ThinTailDiag diag = thin_tail_diag_approx(m, p0);
      return diag.diag.cwiseProduct(t);
    }
  }
  throw InputError("unknown merger method");
}

ResolveResult resolve_post_merger(const Market& m, const MergerScenario& scen, const Vector& p0,
                                  const SolveOptions& opts) {
  const Market post = with_partition(m, scen.post_partition);
  const EquilibriumResult res = solve_bertrand(post, p0, opts);
  ResolveResult out;
  out.p_post = res.p_star;
  out.dp_true = res.p_star - p0;
  out.converged = res.converged;
  return out;
}

MergerReport merger_report(const Market& m, const MergerScenario& scen, const SolveOptions& opts) {
  require_consistent_pre(m, scen);
  const EquilibriumResult pre = solve_bertrand(m, opts);
  if (!pre.converged) throw NoConvergence("pre-merger equilibrium did not converge");

  MergerReport rep;
  rep.p0 = pre.p_star;
  rep.upp = upp_vector(m, rep.p0, scen);
  rep.pseudo_tax = pseudo_tax(m, rep.p0, scen);
  rep.dp_pretax = merger_price_effects(m, rep.p0, scen, MergerMethod::PreJacobian);
  rep.dp_jw = merger_price_effects(m, rep.p0, scen, MergerMethod::JaffeWeyl);
  rep.dp_thin_tail = merger_price_effects(m, rep.p0, scen, MergerMethod::ThinTailDiag);

  const JacobianDecomposition d_pre = jacobian_decomposition(m, rep.p0);
  const Market post = with_partition(m, scen.post_partition);
  const JacobianDecomposition d_post = jacobian_decomposition(post, rep.p0);
  rep.slope_diff = d_post.c_mat - d_pre.c_mat;
  rep.jacobian_identity_gap =
      ((d_post.j_f - d_pre.j_f) - rep.slope_diff).cwiseAbs().maxCoeff();
  if (rep.jacobian_identity_gap > 1e-9)
    throw NonConvergent("K matrix is not ownership-invariant: identity gap " +
                        std::to_string(rep.jacobian_identity_gap));

  ResolveResult truth = resolve_post_merger(m, scen, rep.p0, opts);
  rep.dp_true = truth.dp_true;
  rep.p_post = truth.p_post;
  rep.resolve_converged = truth.converged;

  rep.errors_vs_true["pre_jacobian"] = (rep.dp_pretax - rep.dp_true).cwiseAbs().maxCoeff();
  rep.errors_vs_true["jaffe_weyl"] = (rep.dp_jw - rep.dp_true).cwiseAbs().maxCoeff();
  rep.errors_vs_true["thin_tail_diag"] = (rep.dp_thin_tail - rep.dp_true).cwiseAbs().maxCoeff();
  return rep;
}

Vector solve_wedge_scaled(const Market& m, const MergerScenario& scen, double eps,
                          const Vector& p0, const SolveOptions& opts) {
  require_consistent_pre(m, scen);
  const Market post = with_partition(m, scen.post_partition);

  auto wedge = [&](const Vector& p) -> Vector {
    const DerivedDemand dd = derived_demand(m.demand, p);
    const Vector margin = p - m.cost;
    Vector g = Vector::Zero(m.n_products);
    for (int j = 0; j < m.n_products; ++j)
      for (int l = 0; l < m.n_products; ++l)
        if (l != j)
          g[j] += (scen.omega_post(j, l) - scen.omega_pre(j, l)) * dd.diversion(j, l) * margin[l];
    return g;
  };

  Vector p = p0;
  Vector F = normalized_foc(m, p) + eps * wedge(p);
  double res = F.cwiseAbs().maxCoeff();
  for (int it = 0; it < opts.max_iter; ++it) {
    if (res <= opts.tol) return p;
    const JacobianDecomposition d_pre = jacobian_decomposition(m, p);
    const JacobianDecomposition d_post = jacobian_decomposition(post, p);
    const Matrix jac = d_pre.j_f + eps * (d_post.c_mat - d_pre.c_mat);
    const Vector dp = Eigen::PartialPivLU<Matrix>(jac).solve(-F);
    double t = 1.0;
    bool advanced = false;
    for (int halving = 0; halving <= 20; ++halving, t *= 0.5) {
      const Vector p_try = p + t * dp;
      if (!(p_try.array() > 0.0).all()) continue;
      try {
        const Vector F_try = normalized_foc(m, p_try) + eps * wedge(p_try);
        const double r_try = F_try.cwiseAbs().maxCoeff();
        if (r_try < res) {
          p = p_try;
          F = F_try;
          res = r_try;
          advanced = true;
          break;
        }
      } catch (const Error&) {
      }
    }
    if (!advanced) break;
  }
  if (res > opts.tol)
    throw NoConvergence("wedge-scaled system did not converge (residual " + std::to_string(res) +
                        ")");
  return p;
}

}  // namespace passmat
