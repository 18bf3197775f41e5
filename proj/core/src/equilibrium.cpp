#include "passmat/equilibrium.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "passmat/passthrough.hpp"

namespace passmat {

namespace {

bool strictly_positive(const Vector& p) { return (p.array() > 0.0).all(); }

double mean_alpha(const MixedLogit& d) {
  if (const auto* ln = std::get_if<LogNormalMixing>(&d.mixing))
    return std::exp(ln->mu + 0.5 * ln->sigma_ln * ln->sigma_ln);
  const auto& g = std::get<GammaMixing>(d.mixing);
  return g.shape_r / g.rate_beta;
}

}  // namespace

Vector foc_residual(const Market& m, const Vector& p) {
  const DemandEval ev = eval_demand(m.demand, p);
  const Matrix delta_mat = m.omega.cwiseProduct(ev.jac.transpose());
  return ev.q + delta_mat * (p - m.cost);
}

Vector normalized_foc(const Market& m, const Vector& p) {
  const int J = m.n_products;
  const DemandEval ev = eval_demand(m.demand, p);
  Vector f(J);
  for (int j = 0; j < J; ++j) {
    const double own = ev.jac(j, j);
    if (own == 0.0)
      throw SingularOwnSlope("own slope of product " + std::to_string(j) + " is zero");
    double cross = 0.0;
    for (int l = 0; l < J; ++l) {
      if (l == j || m.omega(j, l) == 0.0) continue;
      cross += m.omega(j, l) * (p[l] - m.cost[l]) * (-ev.jac(l, j) / own);
    }
    f[j] = -ev.q[j] / own - (p[j] - m.cost[j]) + cross;
  }
  return f;
}

Vector default_start(const Market& m) {
  const int J = m.n_products;
  return std::visit(
      [&](const auto& d) -> Vector {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Logit> || std::is_same_v<T, NestedLogit>) {
          const double sbar = 1.0 / (J + 1);
          return m.cost.array() + 1.0 / (d.alpha * (1.0 - sbar));
        } else if constexpr (std::is_same_v<T, MixedLogit>) {
          const double sbar = 1.0 / (J + 1);
          return m.cost.array() + 1.0 / (mean_alpha(d) * (1.0 - sbar));
        } else if constexpr (std::is_same_v<T, Ces>) {
          return m.cost * (d.sigma_ces / (d.sigma_ces - 1.0));
        } else {
          return (1.5 * m.cost.array()).max(1e-3);
        }
      },
      m.demand);
}

EquilibriumResult solve_bertrand(const Market& m, const SolveOptions& opts) {
  return solve_bertrand(m, default_start(m), opts);
}

EquilibriumResult solve_bertrand(const Market& m, const Vector& p0, const SolveOptions& opts) {
  Vector p = p0;
  Vector f;
  try {
    f = normalized_foc(m, p);
  } catch (const Error& e) {
    throw DomainExhausted(std::string("starting point is not evaluable: ") + e.what());
  }
  double res = f.cwiseAbs().maxCoeff();

  EquilibriumResult out;
  out.p_star = p;
  out.residual_norm = res;
  out.converged = false;
  out.soc_ok = false;
  out.iterations = 0;

  for (int it = 0; it < opts.max_iter; ++it) {
    out.iterations = it;
    if (res <= opts.tol) {
      out.converged = true;
      break;
    }

    // Newton step on f, halved until the residual decreases
    bool advanced = false;
    try {
      const JacobianDecomposition d = jacobian_decomposition(m, p);
      const Vector dp = Eigen::PartialPivLU<Matrix>(d.j_f).solve(-f);
      if (dp.allFinite()) {
        double t = opts.damping;
        for (int halving = 0; halving <= 20; ++halving, t *= 0.5) {
          const Vector p_try = p + t * dp;
          if (!strictly_positive(p_try)) continue;
          try {
            const Vector f_try = normalized_foc(m, p_try);
            const double r_try = f_try.cwiseAbs().maxCoeff();
            if (r_try < res) {
              p = p_try;
              f = f_try;
              res = r_try;
              advanced = true;
              break;
            }
          } catch (const Error&) {
            // stencil left the demand domain; halve further
          }
        }
      }
    } catch (const Error&) {
      // Jacobian unavailable at p; fall through to the fixed point
    }

    if (!advanced) {
      // damped fixed point on the markup map, p <- p + w f(p)
      double w = 1.0;
      for (int halving = 0; halving <= 20; ++halving, w *= 0.5) {
        const Vector p_try = p + w * f;
        if (!strictly_positive(p_try)) continue;
        try {
          const Vector f_try = normalized_foc(m, p_try);
          const double r_try = f_try.cwiseAbs().maxCoeff();
          if (r_try < res || halving == 20) {
            p = p_try;
            f = f_try;
            res = r_try;
            advanced = true;
            break;
          }
        } catch (const Error&) {
        }
      }
      if (!advanced)
        throw DomainExhausted("no admissible step from the current iterate");
    }

    out.p_star = p;
    out.residual_norm = res;
  }

  out.p_star = p;
  out.residual_norm = res;
  if (res <= opts.tol) out.converged = true;
  if (out.converged) out.soc_ok = soc_check(m, p).all_ok;
  return out;
}

Margins margins(const Market& m, const Vector& p) {
  Margins out;
  out.absolute = p - m.cost;
  out.relative = out.absolute.cwiseQuotient(p);
  return out;
}

SocReport soc_check(const Market& m, const Vector& p, int n_directions, std::uint64_t seed) {
  const DemandEval ev = eval_demand(m.demand, p);
  SocReport rep;
  rep.all_ok = true;
  Rng rng(seed);
  for (std::size_t firm = 0; firm < m.firms.size(); ++firm) {
    const int n = static_cast<int>(m.firms[firm].size());
    FirmSocReport fr;
    fr.firm = static_cast<int>(firm);

    const Matrix hess = firm_profit_hessian(m, static_cast<int>(firm), p, ev);
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (hess + hess.transpose()));
    fr.max_eigenvalue = es.eigenvalues().maxCoeff();
    fr.ok = fr.max_eigenvalue <= 1e-8;

    fr.min_directional_margin = std::numeric_limits<double>::infinity();
    int accepted = 0, attempts = 0;
    while (accepted < n_directions && attempts < 50 * n_directions) {
      ++attempts;
      Vector v(n);
      for (int a = 0; a < n; ++a) v[a] = rng.normal();
      const double norm = v.norm();
      if (norm == 0.0) continue;
      v /= norm;
      try {
        const DirectionalAnalysis da = directional_analysis(m, static_cast<int>(firm), p, v);
        fr.min_directional_margin = std::min(fr.min_directional_margin, da.stability_margin);
        ++accepted;
      } catch (const RegularityViolation&) {
      } catch (const ZeroWeight&) {
      }
    }
    rep.all_ok = rep.all_ok && fr.ok;
    rep.firms.push_back(fr);
  }
  return rep;
}

}  // namespace passmat
