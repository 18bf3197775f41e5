#include "passmat/asymptotics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "passmat/quadrature.hpp"

namespace passmat {

namespace {

struct ExtrapolationResult {
  double limit;
  double remaining;  // estimate of |limit - truth|
};

// Aitken delta-squared on the last three sequence values. Falls back to the
// last value when increments indicate slower-than-geometric convergence.
ExtrapolationResult extrapolate(double x0, double x1, double x2) {
  if (!std::isfinite(x2)) throw NonConvergent("sequence value is not finite");
  const double d1 = x1 - x0;
  const double d2 = x2 - x1;
  const double scale = std::max({std::abs(x0), std::abs(x1), std::abs(x2), 1.0});
  if (std::abs(d2) <= 1e-14 * scale) return {x2, std::abs(d2)};
  if (std::abs(d2) >= std::abs(d1)) return {x2, std::abs(d2)};  // ratio >= 1: log-slow
  const double denom = d2 - d1;
  if (std::abs(denom) <= 1e-300) return {x2, std::abs(d2)};
  const double limit = x2 - d2 * d2 / denom;
  return {limit, std::abs(limit - x2)};
}

// log C derivatives for the gamma mixed-logit ray limit, per product.
struct GammaLogCDerivs {
  double zeta;
  double chi;
  Vector xi;        // k != j entries
  Vector dlogc_dk;  // d log C_j / d p_k, k != j (for rho)
};

GammaLogCDerivs gamma_logc_derivs(const MixedLogit& spec, const GammaMixing& mix,
                                  const Vector& p, int j) {
  const int J = static_cast<int>(p.size());
  const double r = mix.shape_r;
  const QuadratureRule rule = gauss_generalized_laguerre(spec.quad_nodes, r - 1.0);

  Vector ratios = p / p[j];
  double c0 = 0.0;
  Vector c1 = Vector::Zero(J);      // dC/dr_l, l != j
  Matrix c2 = Matrix::Zero(J, J);   // d2C/dr_l dr_m, l,m != j
  for (int i = 0; i < spec.quad_nodes; ++i) {
    const double u = rule.nodes[i];
    const double w = rule.normalized[i];
    Vector v(J);
    for (int l = 0; l < J; ++l) v[l] = spec.delta[l] - ratios[l] * u;
    const double mx = std::max(v.maxCoeff(), 0.0);
    double den = std::exp(-mx);
    for (int l = 0; l < J; ++l) den += std::exp(v[l] - mx);
    const double logden = mx + std::log(den);  // log(1 + sum exp v)
    c0 += w * std::exp(-logden);
    for (int l = 0; l < J; ++l) {
      if (l == j) continue;
      c1[l] += w * u * std::exp(v[l] - 2.0 * logden);
      for (int m = 0; m < J; ++m) {
        if (m == j) continue;
        double term = 2.0 * std::exp(v[l] + v[m] - 3.0 * logden);
        if (l == m) term -= std::exp(v[l] - 2.0 * logden);
        c2(l, m) += w * u * u * term;
      }
    }
  }
  if (!(c0 > 1e-300)) throw QuadratureFailure("gamma correction integral C_j underflowed");

  // chain rule from ratios r_l = p_l / p_j to price derivatives
  double sum_rc1 = 0.0, sum_rrc2 = 0.0;
  for (int l = 0; l < J; ++l) {
    if (l == j) continue;
    sum_rc1 += ratios[l] * c1[l];
    for (int m = 0; m < J; ++m)
      if (m != j) sum_rrc2 += ratios[l] * ratios[m] * c2(l, m);
  }
  const double pj = p[j];
  const double dC_dj = -sum_rc1 / pj;
  const double d2C_djj = (2.0 * sum_rc1 + sum_rrc2) / (pj * pj);

  GammaLogCDerivs out;
  out.xi = Vector::Zero(J);
  out.dlogc_dk = Vector::Zero(J);
  const double dlog_dj = dC_dj / c0;
  out.zeta = -(pj / r) * dlog_dj;
  out.chi = (pj * pj / r) * (d2C_djj / c0 - dlog_dj * dlog_dj);
  for (int k = 0; k < J; ++k) {
    if (k == j) continue;
    double sum_rc2k = 0.0;
    for (int l = 0; l < J; ++l)
      if (l != j) sum_rc2k += ratios[l] * c2(l, k);
    const double dC_dk = c1[k] / pj;
    const double d2C_djk = -(c1[k] + sum_rc2k) / (pj * pj);
    out.dlogc_dk[k] = dC_dk / c0;
    out.xi[k] = (pj * pj / r) * (d2C_djk / c0 - dlog_dj * (dC_dk / c0));
  }
  return out;
}

TailClass classify(double a) {
  if (std::abs(a) < 1e-3) return TailClass::Thin;
  return a > 0.0 ? TailClass::Fat : TailClass::FiniteChoke;
}

}  // namespace

SemiElasticityForm semi_elasticity_form(const DemandSpec& spec, const Vector& p) {
  const int J = n_products(spec);
  const DemandEval ev = eval_demand(spec, p);

  SemiElasticityForm out;
  out.diag.resize(J);
  out.offdiag = Matrix::Zero(J, J);
  out.dual_gap = 0.0;

  for (int j = 0; j < J; ++j) {
    const double own = ev.jac(j, j);
    if (own == 0.0)
      throw SingularOwnSlope("own slope of product " + std::to_string(j) + " is zero");
    const double q = ev.q[j];
    const double eta_jj_sq = (own / q) * (own / q);

    const double d_eta_jj = ev.hess[j](j, j) / q - own * own / (q * q);
    out.diag[j] = -1.0 + d_eta_jj / eta_jj_sq;
    // dual route: -2 + kappa^j_jj
    const double dual_diag = -2.0 + q * ev.hess[j](j, j) / (own * own);
    out.dual_gap = std::max(out.dual_gap,
                            std::abs(out.diag[j] - dual_diag) / std::max(1.0, std::abs(dual_diag)));

    for (int k = 0; k < J; ++k) {
      if (k == j) continue;
      const double d_eta_jk = ev.hess[j](k, j) / q - ev.jac(j, k) * own / (q * q);
      out.offdiag(j, k) = d_eta_jk / eta_jj_sq;
      // dual route: delta_jk (1 - kappa^j_kj), expanded
      const double dual_off = -ev.jac(j, k) / own + q * ev.hess[j](k, j) / (own * own);
      out.dual_gap = std::max(
          out.dual_gap, std::abs(out.offdiag(j, k) - dual_off) / std::max(1.0, std::abs(dual_off)));
    }
  }
  if (out.dual_gap > 1e-9)
    throw NonConvergent("semi-elasticity identity violated: dual gap " +
                        std::to_string(out.dual_gap));
  return out;
}

std::vector<double> default_ray_lambdas(double lambda_max) {
  std::vector<double> lambdas;
  for (double e = 1.0;; e += 0.5) {
    const double lam = std::pow(10.0, e);
    if (lam > lambda_max * (1.0 + 1e-12)) break;
    lambdas.push_back(lam);
  }
  return lambdas;
}

RaySequence make_ray_sequence(const Vector& base_p, const std::vector<double>& lambdas) {
  if (lambdas.size() < 3) throw InputError("ray sequence needs at least 3 scale factors");
  for (std::size_t i = 1; i < lambdas.size(); ++i)
    if (!(lambdas[i] > lambdas[i - 1]))
      throw InputError("ray scale factors must be strictly increasing");
  RaySequence seq;
  seq.kind = RaySequence::Kind::Ray;
  seq.base_p = base_p;
  seq.lambdas = lambdas;
  for (double lam : lambdas) seq.points.push_back(lam * base_p);
  return seq;
}

RaySequence linear_boundary_sequence(const Linear& d, int j, const Vector& start_p, int n_points,
                                     double approach) {
  if (n_points < 3) throw InputError("boundary sequence needs at least 3 points");
  // choke price along +e_j holding other prices fixed: q_j = 0 at
  // p_j + q_j(start) / beta_jj
  const Vector q0 = d.gamma_vec - d.beta_mat * start_p;
  if (!(q0[j] > 0.0)) throw OutOfDomain("start point is outside the demand domain");
  const double p_choke = start_p[j] + q0[j] / d.beta_mat(j, j);

  RaySequence seq;
  seq.kind = RaySequence::Kind::Boundary;
  seq.base_p = start_p;
  seq.boundary_product = j;
  double gap = p_choke - start_p[j];
  Vector p = start_p;
  for (int i = 0; i < n_points; ++i) {
    gap *= approach;
    p[j] = p_choke - gap;
    seq.points.push_back(p);
    seq.lambdas.push_back(1.0 / gap);
  }
  return seq;
}

RaySequence aids_boundary_sequence(const Aids& d, int j, const Vector& base_p, int n_points) {
  if (n_points < 3) throw InputError("boundary sequence needs at least 3 points");
  // w_j(lambda p) = w_j(p) + log(lambda) * (sum_l gamma_jl - beta_j)
  const double slope = d.gamma_mat.row(j).sum() - d.beta_vec[j];
  if (std::abs(slope) < 1e-12)
    throw DegenerateAids("AIDS boundary path: share of product " + std::to_string(j) +
                         " does not respond to a common price scale");
  const Vector logp = base_p.array().log();
  const double log_stone = d.stone_weights.dot(logp);
  const double w0 = d.alpha_vec[j] + d.gamma_mat.row(j).dot(logp) +
                    d.beta_vec[j] * (std::log(d.budget_B) - log_stone);
  if (!(w0 > 0.0)) throw OutOfDomain("base point is outside the AIDS domain");

  RaySequence seq;
  seq.kind = RaySequence::Kind::Boundary;
  seq.base_p = base_p;
  seq.boundary_product = j;
  for (int i = 1; i <= n_points; ++i) {
    const double target = w0 * std::pow(0.5, 4 + 2 * i);  // drive w_j down hard
    const double log_lambda = (target - w0) / slope;
    seq.points.push_back(std::exp(log_lambda) * base_p);
    seq.lambdas.push_back(std::exp(log_lambda));
  }
  return seq;
}

TailCoefficients estimate_tail_coefficients(const DemandSpec& spec, const RaySequence& seq) {
  const int J = n_products(spec);
  const int N = static_cast<int>(seq.points.size());
  if (N < 3) throw InputError("sequence needs at least 3 points");

  std::vector<SemiElasticityForm> forms;
  std::vector<Matrix> etas;
  Vector first_shares, last_shares;
  for (int n = 0; n < N; ++n) {
    const Vector& p = seq.points[n];
    forms.push_back(semi_elasticity_form(spec, p));
    const DerivedDemand dd = derived_demand(spec, p);
    etas.push_back(dd.eta);
    if (n == 0) first_shares = dd.shares;
    if (n == N - 1) last_shares = dd.shares;
  }

  // verify the targeted shares vanish along the sequence
  if (seq.kind == RaySequence::Kind::Ray) {
    for (int j = 0; j < J; ++j) {
      if (!(last_shares[j] < 0.05) || !(last_shares[j] < first_shares[j]))
        throw NotVanishing("share of product " + std::to_string(j) +
                           " does not vanish along the ray");
    }
  } else {
    const int j = seq.boundary_product;
    if (!(last_shares[j] < 0.05 * first_shares[j]))
      throw NotVanishing("share of boundary product " + std::to_string(j) +
                         " does not vanish along the path");
  }

  TailCoefficients out;
  out.a.resize(J);
  out.b = Matrix::Zero(J, J);
  out.rho = Matrix::Zero(J, J);
  out.a_convergence.resize(J);
  out.b_convergence = 0.0;

  auto diag_at = [&](int n, int j) { return forms[n].diag[j] + 1.0; };
  for (int j = 0; j < J; ++j) {
    const ExtrapolationResult ex =
        extrapolate(diag_at(N - 3, j), diag_at(N - 2, j), diag_at(N - 1, j));
    out.a[j] = ex.limit;
    out.a_convergence[j] = ex.remaining;
    for (int k = 0; k < J; ++k) {
      if (k == j) continue;
      const ExtrapolationResult exb = extrapolate(
          forms[N - 3].offdiag(j, k), forms[N - 2].offdiag(j, k), forms[N - 1].offdiag(j, k));
      out.b(j, k) = exb.limit;
      out.b_convergence = std::max(out.b_convergence, exb.remaining);
      const ExtrapolationResult exr =
          extrapolate(-etas[N - 3](j, k) / etas[N - 3](j, j), -etas[N - 2](j, k) / etas[N - 2](j, j),
                      -etas[N - 1](j, k) / etas[N - 1](j, j));
      out.rho(j, k) = exr.limit;
    }
    out.tail_class.push_back(classify(out.a[j]));
  }
  return out;
}

TailCoefficients theoretical_limit(const DemandSpec& spec, const LimitContext& ctx) {
  const int J = n_products(spec);
  TailCoefficients out;
  out.a = Vector::Zero(J);
  out.b = Matrix::Zero(J, J);
  out.rho = Matrix::Zero(J, J);
  out.a_convergence = Vector::Zero(J);
  out.b_convergence = 0.0;

  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Logit>) {
          // a = 0, b = 0
        } else if constexpr (std::is_same_v<T, Ces>) {
          out.a.setConstant(1.0 / d.sigma_ces);
        } else if constexpr (std::is_same_v<T, MixedLogit>) {
          if (std::holds_alternative<LogNormalMixing>(d.mixing)) {
            // thin tail: a = 0, b = 0
          } else {
            if (!ctx.base_p)
              throw InputError("gamma mixed-logit limit needs the ray base point");
            const auto& mix = std::get<GammaMixing>(d.mixing);
            for (int j = 0; j < J; ++j) {
              const GammaLogCDerivs gd = gamma_logc_derivs(d, mix, *ctx.base_p, j);
              const double denom = (1.0 + gd.zeta) * (1.0 + gd.zeta);
              out.a[j] = (1.0 / mix.shape_r) * (1.0 + gd.chi) / denom;
              for (int k = 0; k < J; ++k) {
                if (k == j) continue;
                out.b(j, k) = (1.0 / mix.shape_r) * gd.xi[k] / denom;
                out.rho(j, k) =
                    (*ctx.base_p)[j] * gd.dlogc_dk[k] / (mix.shape_r * (1.0 + gd.zeta));
              }
            }
          }
        } else if constexpr (std::is_same_v<T, Linear>) {
          out.a.setConstant(-1.0);
          for (int j = 0; j < J; ++j)
            for (int k = 0; k < J; ++k)
              if (k != j) out.b(j, k) = -d.beta_mat(j, k) / d.beta_mat(j, j);
          out.rho = out.b;
        } else if constexpr (std::is_same_v<T, Aids>) {
          if (!ctx.cbar) throw InputError("AIDS limit needs the limiting price ratios cbar");
          out.a.setConstant(-1.0);
          for (int j = 0; j < J; ++j) {
            const double ajj = d.gamma_mat(j, j) - d.beta_vec[j] * d.stone_weights[j];
            if (std::abs(ajj) < 1e-300)
              throw DegenerateAids("gamma_jj - beta_j omega_j vanishes for product " +
                                   std::to_string(j));
            for (int k = 0; k < J; ++k) {
              if (k == j) continue;
              const double ajk = d.gamma_mat(j, k) - d.beta_vec[j] * d.stone_weights[k];
              out.b(j, k) = -(*ctx.cbar)(j, k) * ajk / ajj;
            }
          }
          out.rho = out.b;
        } else {
          throw UnsupportedDemand(
              "no closed-form small-share row for this family; see nested_logit_limit");
        }
      },
      spec);

  for (int j = 0; j < J; ++j) out.tail_class.push_back(classify(out.a[j]));
  return out;
}

GammaCorrections gamma_corrections(const MixedLogit& spec, const Vector& base_p) {
  const auto* mix = std::get_if<GammaMixing>(&spec.mixing);
  if (!mix) throw InputError("gamma_corrections requires gamma mixing");
  const int J = static_cast<int>(base_p.size());
  GammaCorrections out;
  out.zeta.resize(J);
  out.chi.resize(J);
  out.xi = Matrix::Zero(J, J);
  for (int j = 0; j < J; ++j) {
    const GammaLogCDerivs gd = gamma_logc_derivs(spec, *mix, base_p, j);
    out.zeta[j] = gd.zeta;
    out.chi[j] = gd.chi;
    for (int k = 0; k < J; ++k)
      if (k != j) out.xi(j, k) = gd.xi[k];
  }
  return out;
}

LocalPaths limit_paths(const TailCoefficients& coeffs, const Vector& t_grid, const Matrix* rho) {
  const int J = static_cast<int>(coeffs.a.size());
  const int T = static_cast<int>(t_grid.size());
  const Matrix& rho_mat = rho ? *rho : coeffs.rho;

  for (int j = 0; j < J; ++j)
    for (int t = 0; t < T; ++t)
      if (!(1.0 + coeffs.a[j] * t_grid[t] > 0.0))
        throw GridOutOfRange("t = " + std::to_string(t_grid[t]) +
                             " violates 1 + a t > 0 for product " + std::to_string(j));

  LocalPaths out;
  out.t_grid = t_grid;
  out.e_path.resize(J, T);
  out.q_path.resize(J, T);
  out.g_path.assign(J, Matrix::Zero(J, T));
  for (int j = 0; j < J; ++j) {
    const double a = coeffs.a[j];
    for (int t = 0; t < T; ++t) {
      const double tt = t_grid[t];
      if (a == 0.0) {
        out.e_path(j, t) = 1.0;
        out.q_path(j, t) = std::exp(-tt);
      } else {
        out.e_path(j, t) = 1.0 / (1.0 + a * tt);
        out.q_path(j, t) = std::exp(-std::log1p(a * tt) / a);
      }
      for (int k = 0; k < J; ++k) {
        if (k == j) continue;
        const double b = coeffs.b(j, k);
        const double r0 = rho_mat(j, k);
        out.g_path[j](k, t) = a == 0.0 ? r0 + b * tt : r0 + (b / a) * (1.0 - 1.0 / (1.0 + a * tt));
      }
    }
  }
  return out;
}

EmpiricalPaths empirical_paths(const DemandSpec& spec, const RaySequence& seq,
                               const Vector& t_grid) {
  const Vector& p_n = seq.points.back();
  const int J = n_products(spec);
  const int T = static_cast<int>(t_grid.size());
  const DerivedDemand base = derived_demand(spec, p_n);
  const DemandEval base_ev = eval_demand(spec, p_n);

  EmpiricalPaths out;
  out.t_grid = t_grid;
  out.e_path.resize(J, T);
  out.q_path.resize(J, T);
  for (int j = 0; j < J; ++j) {
    const double lam = -base.eta(j, j);
    if (!(lam > 0.0)) throw NonConvergent("own semi-elasticity is not negative");
    for (int t = 0; t < T; ++t) {
      Vector p = p_n;
      p[j] += t_grid[t] / lam;
      const DemandEval ev = eval_demand(spec, p);
      out.e_path(j, t) = (ev.jac(j, j) / ev.q[j]) / base.eta(j, j);
      out.q_path(j, t) = ev.q[j] / base_ev.q[j];
    }
  }
  return out;
}

NestedLimit nested_logit_limit(const NestedLimitInput& input, const Matrix& omega) {
  const int J = static_cast<int>(input.nest_of.size());
  if (!(input.sigma >= 0.0 && input.sigma < 1.0))
    throw InputError("nesting parameter must lie in [0,1)");
  if (input.sbar.size() != J) throw DimensionMismatch("sbar length mismatch");
  for (int j = 0; j < J; ++j)
    if (input.sbar[j] < 0.0 || input.sbar[j] > 1.0)
      throw InputError("within-nest share out of [0,1]");

  const double sg = input.sigma;
  auto same = [&](int a, int b) { return input.nest_of[a] == input.nest_of[b]; };

  NestedLimit out;
  out.b_star.resize(J);
  for (int j = 0; j < J; ++j) out.b_star[j] = 1.0 - sg * input.sbar[j];

  out.jd_star = Matrix::Zero(J, J);
  out.d_star = Matrix::Zero(J, J);
  for (int j = 0; j < J; ++j) {
    const double bj = out.b_star[j];
    out.jd_star(j, j) = -1.0 - sg * input.sbar[j] * (1.0 - input.sbar[j]) / (bj * bj);
    out.d_star(j, j) = -1.0;
    for (int k = 0; k < J; ++k) {
      if (k == j || !same(j, k)) continue;
      out.jd_star(j, k) = sg * input.sbar[j] * input.sbar[k] / (bj * bj);
      out.d_star(j, k) = sg * input.sbar[k] / bj;
    }
  }

  out.lambda_star = Matrix::Zero(J, J);
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < J; ++k)
      out.lambda_star(j, k) = (j == k) ? 1.0 : -omega(j, k) * out.d_star(j, k);

  // limiting markups, nest block by nest block
  Eigen::PartialPivLU<Matrix> lu_lambda(out.lambda_star);
  if (!(lu_lambda.rcond() > 1e-12))
    throw SingularNestBlock("limiting Lambda* block is numerically singular");
  out.markups_bar = lu_lambda.solve(out.b_star.cwiseInverse());

  // limit of dD_{j->l}/dp_k from D_{j->l} -> sigma sbar_l / B_j with
  // d s_{l|g} / d p_k = -s_{l|g} (1{l=k} - s_{k|g}) and
  // d B_j / d p_k -> sigma sbar_j (1{j=k} - sbar_k)
  out.gamma3.assign(J, Matrix::Zero(J, J));
  for (int j = 0; j < J; ++j) {
    const double bj = out.b_star[j];
    for (int l = 0; l < J; ++l) {
      if (l == j || !same(j, l)) continue;
      for (int k = 0; k < J; ++k) {
        if (!same(j, k)) continue;
        const double term = (input.sbar[k] - (l == k ? 1.0 : 0.0)) * bj +
                            sg * input.sbar[j] * (input.sbar[k] - (j == k ? 1.0 : 0.0));
        out.gamma3[j](l, k) = sg * input.sbar[l] * term / (bj * bj);
      }
    }
  }

  out.c_star = Matrix::Zero(J, J);
  for (int j = 0; j < J; ++j) {
    for (int k = 0; k < J; ++k) {
      double acc = 0.0;
      for (int l = 0; l < J; ++l) {
        if (l == j || !same(j, l)) continue;
        acc += omega(j, l) * out.markups_bar[l] * out.gamma3[j](l, k);
      }
      out.c_star(j, k) = (k == j) ? acc : omega(j, k) * out.d_star(j, k) + acc;
    }
  }

  // every cross-nest entry must be exactly zero by construction
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < J; ++k)
      if (!same(j, k) && (out.jd_star(j, k) != 0.0 || out.d_star(j, k) != 0.0 ||
                          out.c_star(j, k) != 0.0 || out.lambda_star(j, k) != 0.0))
        throw NonConvergent("cross-nest entry leaked into the block limit");

  const Matrix j_star = out.jd_star + out.c_star;
  Eigen::PartialPivLU<Matrix> lu_j(j_star);
  if (!(lu_j.rcond() > 1e-12)) throw SingularJStar("limiting Jacobian J* is singular");
  out.psi_star = -lu_j.solve(out.lambda_star);
  return out;
}

ThinTailDiag thin_tail_diag_approx(const Market& m, const Vector& p) {
  const DerivedDemand dd = derived_demand(m.demand, p);
  const int J = m.n_products;
  ThinTailDiag out;
  out.diag.resize(J);
  out.inelastic.assign(J, false);
  out.covered_families = {"logit", "ces", "mixed_logit_lognormal"};
  for (int j = 0; j < J; ++j) {
    const double eps = dd.eps_own[j];
    out.inelastic[j] = !(eps < -1.0);
    out.diag[j] = 1.0 / (1.0 + 1.0 / eps);
  }
  return out;
}

}  // namespace passmat
