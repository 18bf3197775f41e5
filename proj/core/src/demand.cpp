#include "passmat/demand.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "passmat/quadrature.hpp"

namespace passmat {

namespace {

constexpr double kUnderflowFloor = 1e-300;

void require_positive_prices(const Vector& p) {
  for (int j = 0; j < p.size(); ++j) {
    if (!(p[j] > 0.0)) {
      throw NonPositivePrice("price of product " + std::to_string(j) + " is " +
                             std::to_string(p[j]));
    }
  }
}

// Softmax of v against an outside option with utility 0. Returns the inside
// shares; log_denom receives log(1 + sum exp(v_l)).
Vector softmax_with_outside(const Vector& v, double* log_denom = nullptr) {
  const double mx = std::max(v.maxCoeff(), 0.0);
  Vector e = (v.array() - mx).exp();
  const double den = std::exp(-mx) + e.sum();
  if (log_denom) *log_denom = mx + std::log(den);
  return e / den;
}

// ---------------------------------------------------------------------------
// Logit
// ---------------------------------------------------------------------------

DemandEval eval_logit(const Logit& d, const Vector& p) {
  const int J = static_cast<int>(d.delta.size());
  const Vector v = d.delta - d.alpha * p;
  const Vector s = softmax_with_outside(v);
  DemandEval ev;
  ev.q = d.scale_M * s;
  ev.jac.resize(J, J);
  const double a = d.alpha;
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < J; ++k)
      ev.jac(j, k) = -d.scale_M * a * s[j] * ((j == k ? 1.0 : 0.0) - s[k]);
  ev.hess.assign(J, Matrix(J, J));
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < J; ++k)
      for (int l = 0; l < J; ++l) {
        const double ejk = (j == k), ejl = (j == l), ekl = (k == l);
        ev.hess[j](k, l) =
            d.scale_M * a * a * s[j] * ((ejk - s[k]) * (ejl - s[l]) - s[k] * (ekl - s[l]));
      }
  return ev;
}

// ---------------------------------------------------------------------------
// Nested logit
// ---------------------------------------------------------------------------

// Utility-space shares and derivatives; price derivatives follow from
// v_j = delta_j - alpha p_j by factors of (-alpha). Within-nest shares use
// the utilities directly; the nesting parameter scales the inclusive values
// only: s_{j|g} = e^{v_j} / S_g, s_g = S_g^{1-sigma} / (1 + sum_h S_h^{1-sigma}).
struct NestedShares {
  Vector s;        // unconditional inside shares
  Vector within;   // s_{j|g(j)}
  Vector nest_of_s; // s_{g(j)} per product
};

NestedShares nested_shares(const NestedLogit& d, const Vector& p) {
  const int J = static_cast<int>(d.delta.size());
  const double lambda = 1.0 - d.sigma_nest;
  const Vector v = d.delta - d.alpha * p;

  std::map<int, std::vector<int>> groups;
  for (int j = 0; j < J; ++j) groups[d.nest_of[j]].push_back(j);

  NestedShares out;
  out.s.resize(J);
  out.within.resize(J);
  out.nest_of_s.resize(J);

  std::map<int, double> inclusive; // I_g = (1-sigma) log S_g
  for (const auto& [g, members] : groups) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j : members) mx = std::max(mx, v[j]);
    double acc = 0.0;
    for (int j : members) acc += std::exp(v[j] - mx);
    const double lse = mx + std::log(acc);
    inclusive[g] = lambda * lse;
    for (int j : members) out.within[j] = std::exp(v[j] - lse);
  }

  double mg = 0.0;
  for (const auto& [g, ig] : inclusive) mg = std::max(mg, ig);
  double den = std::exp(-mg);
  std::map<int, double> nest_share;
  for (const auto& [g, ig] : inclusive) den += std::exp(ig - mg);
  for (const auto& [g, ig] : inclusive) nest_share[g] = std::exp(ig - mg) / den;

  for (int j = 0; j < J; ++j) {
    out.nest_of_s[j] = nest_share[d.nest_of[j]];
    out.s[j] = out.nest_of_s[j] * out.within[j];
  }
  return out;
}

DemandEval eval_nested_logit(const NestedLogit& d, const Vector& p) {
  const int J = static_cast<int>(d.delta.size());
  const double lambda = 1.0 - d.sigma_nest;
  const NestedShares ns = nested_shares(d, p);

  auto same = [&](int a, int b) { return d.nest_of[a] == d.nest_of[b] ? 1.0 : 0.0; };
  auto e = [](int a, int b) { return a == b ? 1.0 : 0.0; };

  // Phi(j,m) with ds_j/dv_m = s_j * Phi(j,m)
  Matrix Phi(J, J);
  for (int j = 0; j < J; ++j)
    for (int m = 0; m < J; ++m)
      Phi(j, m) = (e(j, m) - ns.within[m]) * same(j, m) +
                  lambda * (same(j, m) - ns.nest_of_s[m]) * ns.within[m];

  Matrix T(J, J); // ds_j/dv_m
  for (int j = 0; j < J; ++j)
    for (int m = 0; m < J; ++m) T(j, m) = ns.s[j] * Phi(j, m);

  DemandEval ev;
  ev.q = d.scale_M * ns.s;
  ev.jac = -d.scale_M * d.alpha * T;

  // dPhi(j,m)/dv_n: within-share and nest-share responses
  ev.hess.assign(J, Matrix(J, J));
  for (int j = 0; j < J; ++j) {
    for (int m = 0; m < J; ++m) {
      for (int n = 0; n < J; ++n) {
        const double dwithin_m = ns.within[m] * (e(m, n) - ns.within[n]) * same(m, n);
        const double dnest_m =
            lambda * ns.nest_of_s[m] * (same(m, n) - ns.nest_of_s[n]) * ns.within[n];
        const double dPhi = -dwithin_m * same(j, m) +
                            lambda * (same(j, m) - ns.nest_of_s[m]) * dwithin_m -
                            lambda * dnest_m * ns.within[m];
        const double U = T(j, n) * Phi(j, m) + ns.s[j] * dPhi;
        ev.hess[j](m, n) = d.scale_M * d.alpha * d.alpha * U;
      }
    }
  }
  return ev;
}

// ---------------------------------------------------------------------------
// CES
// ---------------------------------------------------------------------------

DemandEval eval_ces(const Ces& d, const Vector& p) {
  const int J = static_cast<int>(d.delta.size());
  const double sm1 = d.sigma_ces - 1.0;
  Vector logx(J);
  for (int j = 0; j < J; ++j) logx[j] = d.delta[j] - sm1 * std::log(p[j]);
  const Vector b = softmax_with_outside(logx);

  auto e = [](int a, int c) { return a == c ? 1.0 : 0.0; };

  Matrix u(J, J); // db_j/dp_k
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < J; ++k) u(j, k) = -sm1 * b[j] * (e(j, k) - b[k]) / p[k];

  DemandEval ev;
  ev.q.resize(J);
  for (int j = 0; j < J; ++j) ev.q[j] = d.budget_B * b[j] / p[j];

  ev.jac.resize(J, J);
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < J; ++k)
      ev.jac(j, k) = d.budget_B * (u(j, k) / p[j] - e(j, k) * b[j] / (p[j] * p[j]));

  ev.hess.assign(J, Matrix(J, J));
  for (int j = 0; j < J; ++j) {
    for (int k = 0; k < J; ++k) {
      for (int l = 0; l < J; ++l) {
        // du(j,k)/dp_l
        const double dudl = -sm1 / p[k] * (u(j, l) * (e(j, k) - b[k]) - b[j] * u(k, l)) -
                            e(k, l) * u(j, k) / p[k];
        ev.hess[j](k, l) =
            d.budget_B * (dudl / p[j] - e(j, l) * u(j, k) / (p[j] * p[j]) -
                          e(j, k) * u(j, l) / (p[j] * p[j]) +
                          2.0 * e(j, k) * e(j, l) * b[j] / (p[j] * p[j] * p[j]));
      }
    }
  }
  return ev;
}

// ---------------------------------------------------------------------------
// Mixed logit
// ---------------------------------------------------------------------------

// Accumulates weighted conditional-logit demand and derivatives at one draw of
// the price coefficient.
void accumulate_conditional_logit(double alpha, double weight, const Vector& delta,
                                  const Vector& p, double scale_M, DemandEval& ev) {
  const int J = static_cast<int>(delta.size());
  const Vector v = delta - alpha * p;
  const Vector s = softmax_with_outside(v);
  for (int j = 0; j < J; ++j) {
    ev.q[j] += weight * scale_M * s[j];
    for (int k = 0; k < J; ++k) {
      const double ejk = (j == k);
      ev.jac(j, k) += -weight * scale_M * alpha * s[j] * (ejk - s[k]);
      for (int l = 0; l < J; ++l) {
        const double ejl = (j == l), ekl = (k == l);
        ev.hess[j](k, l) += weight * scale_M * alpha * alpha * s[j] *
                            ((ejk - s[k]) * (ejl - s[l]) - s[k] * (ekl - s[l]));
      }
    }
  }
}

DemandEval eval_mixed_lognormal(const MixedLogit& d, const LogNormalMixing& mix, const Vector& p) {
  const int J = static_cast<int>(d.delta.size());
  const QuadratureRule rule = gauss_hermite(d.quad_nodes);
  DemandEval ev;
  ev.q = Vector::Zero(J);
  ev.jac = Matrix::Zero(J, J);
  ev.hess.assign(J, Matrix::Zero(J, J));
  for (int i = 0; i < d.quad_nodes; ++i) {
    const double alpha = std::exp(mix.mu + std::sqrt(2.0) * mix.sigma_ln * rule.nodes[i]);
    accumulate_conditional_logit(alpha, rule.normalized[i], d.delta, p, d.scale_M, ev);
  }
  for (int j = 0; j < J; ++j) {
    if (!(ev.q[j] > kUnderflowFloor)) {
      throw QuadratureUnderflow("mixed-logit demand for product " + std::to_string(j) +
                                " underflowed at all quadrature nodes");
    }
  }
  return ev;
}

// Gamma mixing. The exponential price factor exp(-alpha p_j) is absorbed into
// the Laguerre weight per product (substitution u = (beta + p_j) alpha), which
// keeps the rule accurate at any price level: the surviving integrand is the
// conditional choice-denominator factor h = 1/(1 + sum_l exp(delta_l - alpha p_l)),
// with sigma_k = exp(delta_k - alpha p_k) h.
DemandEval eval_mixed_gamma(const MixedLogit& d, const GammaMixing& mix, const Vector& p) {
  const int J = static_cast<int>(d.delta.size());
  const QuadratureRule rule = gauss_generalized_laguerre(d.quad_nodes, mix.shape_r - 1.0);
  DemandEval ev;
  ev.q = Vector::Zero(J);
  ev.jac = Matrix::Zero(J, J);
  ev.hess.assign(J, Matrix::Zero(J, J));

  for (int j = 0; j < J; ++j) {
    const double rate = mix.rate_beta + p[j];
    const double pref =
        d.scale_M * std::exp(d.delta[j] + mix.shape_r * std::log(mix.rate_beta / rate));
    for (int i = 0; i < d.quad_nodes; ++i) {
      const double alpha = rule.nodes[i] / rate;
      const double w = rule.normalized[i];
      const Vector v = d.delta - alpha * p;
      double log_den = 0.0;
      const Vector sig = softmax_with_outside(v, &log_den);
      const double h = std::exp(-log_den);
      ev.q[j] += pref * w * h;
      for (int k = 0; k < J; ++k) {
        const double ejk = (j == k);
        ev.jac(j, k) += pref * w * alpha * h * (sig[k] - ejk);
        for (int l = 0; l < J; ++l) {
          const double ejl = (j == l), ekl = (k == l);
          ev.hess[j](k, l) += pref * w * alpha * alpha * h *
                              (ejk * ejl - ejl * sig[k] - ejk * sig[l] - ekl * sig[k] +
                               2.0 * sig[k] * sig[l]);
        }
      }
    }
    if (!(ev.q[j] > kUnderflowFloor)) {
      throw QuadratureUnderflow("gamma mixed-logit demand for product " + std::to_string(j) +
                                " underflowed at all quadrature nodes");
    }
  }
  return ev;
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

DemandEval eval_linear(const Linear& d, const Vector& p) {
  const int J = static_cast<int>(d.gamma_vec.size());
  DemandEval ev;
  ev.q = d.gamma_vec - d.beta_mat * p;
  for (int j = 0; j < J; ++j) {
    if (!(ev.q[j] > 0.0)) {
      throw OutOfDomain("linear demand for product " + std::to_string(j) +
                        " is nonpositive at the evaluation point");
    }
  }
  ev.jac = -d.beta_mat;
  ev.hess.assign(J, Matrix::Zero(J, J));
  return ev;
}

// ---------------------------------------------------------------------------
// LA/AIDS (Stone index)
// ---------------------------------------------------------------------------

DemandEval eval_aids(const Aids& d, const Vector& p) {
  const int J = static_cast<int>(d.alpha_vec.size());
  const Vector logp = p.array().log();
  const double log_stone = d.stone_weights.dot(logp);
  Vector w(J);
  for (int j = 0; j < J; ++j)
    w[j] = d.alpha_vec[j] + d.gamma_mat.row(j).dot(logp) +
           d.beta_vec[j] * (std::log(d.budget_B) - log_stone);
  for (int j = 0; j < J; ++j) {
    if (!(w[j] > 0.0)) {
      throw OutOfDomain("AIDS expenditure share of product " + std::to_string(j) +
                        " is nonpositive at the evaluation point");
    }
  }

  // A(j,k) = gamma_jk - beta_j omega_k, the log-price derivative of w_j.
  Matrix A(J, J);
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < J; ++k) A(j, k) = d.gamma_mat(j, k) - d.beta_vec[j] * d.stone_weights[k];

  auto e = [](int a, int c) { return a == c ? 1.0 : 0.0; };

  DemandEval ev;
  ev.q.resize(J);
  for (int j = 0; j < J; ++j) ev.q[j] = d.budget_B * w[j] / p[j];
  ev.jac.resize(J, J);
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < J; ++k)
      ev.jac(j, k) =
          d.budget_B * (A(j, k) / (p[j] * p[k]) - e(j, k) * w[j] / (p[j] * p[j]));
  ev.hess.assign(J, Matrix(J, J));
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < J; ++k)
      for (int l = 0; l < J; ++l)
        ev.hess[j](k, l) = d.budget_B * (-A(j, k) * (l == k ? 1.0 : 0.0) / (p[j] * p[k] * p[k]) -
                                         e(j, l) * A(j, k) / (p[j] * p[j] * p[k]) -
                                         e(j, k) * A(j, l) / (p[j] * p[j] * p[l]) +
                                         2.0 * e(j, k) * e(j, l) * w[j] / (p[j] * p[j] * p[j]));
  return ev;
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

double scaled_err(double num, double den) {
  if (den <= 0.0) return num == 0.0 ? 0.0 : num;
  return num / den;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public surface
// ---------------------------------------------------------------------------

int n_products(const DemandSpec& spec) {
  return std::visit(
      [](const auto& d) -> int {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Linear>) return static_cast<int>(d.gamma_vec.size());
        else if constexpr (std::is_same_v<T, Aids>) return static_cast<int>(d.alpha_vec.size());
        else return static_cast<int>(d.delta.size());
      },
      spec);
}

bool is_logit_family(const DemandSpec& spec) {
  return std::holds_alternative<Logit>(spec) || std::holds_alternative<NestedLogit>(spec) ||
         std::holds_alternative<MixedLogit>(spec);
}

void validate(const DemandSpec& spec) {
  const int J = n_products(spec);
  if (J < 1) throw InvalidDemandSpec("demand spec has no products");
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Logit>) {
          if (!(d.alpha > 0.0)) throw InvalidDemandSpec("logit: alpha must be > 0");
          if (!(d.scale_M > 0.0)) throw InvalidDemandSpec("logit: scale_M must be > 0");
        } else if constexpr (std::is_same_v<T, NestedLogit>) {
          if (!(d.alpha > 0.0)) throw InvalidDemandSpec("nested_logit: alpha must be > 0");
          if (!(d.scale_M > 0.0)) throw InvalidDemandSpec("nested_logit: scale_M must be > 0");
          if (!(d.sigma_nest >= 0.0 && d.sigma_nest < 1.0))
            throw InvalidDemandSpec("nested_logit: sigma_nest must lie in [0,1)");
          if (static_cast<int>(d.nest_of.size()) != J)
            throw InvalidDemandSpec("nested_logit: nest_of size mismatch");
        } else if constexpr (std::is_same_v<T, Ces>) {
          if (!(d.sigma_ces > 1.0)) throw InvalidDemandSpec("ces: sigma_ces must be > 1");
          if (!(d.budget_B > 0.0)) throw InvalidDemandSpec("ces: budget_B must be > 0");
        } else if constexpr (std::is_same_v<T, MixedLogit>) {
          if (!(d.scale_M > 0.0)) throw InvalidDemandSpec("mixed_logit: scale_M must be > 0");
          if (d.quad_nodes < 1) throw InvalidDemandSpec("mixed_logit: quad_nodes must be >= 1");
          if (const auto* ln = std::get_if<LogNormalMixing>(&d.mixing)) {
            if (!(ln->sigma_ln > 0.0))
              throw InvalidDemandSpec("mixed_logit: sigma_ln must be > 0");
          } else {
            const auto& g = std::get<GammaMixing>(d.mixing);
            if (!(g.shape_r > 0.0)) throw InvalidDemandSpec("mixed_logit: shape_r must be > 0");
            if (!(g.rate_beta > 0.0)) throw InvalidDemandSpec("mixed_logit: rate_beta must be > 0");
          }
        } else if constexpr (std::is_same_v<T, Linear>) {
          if (d.beta_mat.rows() != J || d.beta_mat.cols() != J)
            throw InvalidDemandSpec("linear: beta_mat must be J x J");
          for (int j = 0; j < J; ++j)
            if (!(d.beta_mat(j, j) > 0.0))
              throw InvalidDemandSpec("linear: beta_mat diagonal must be strictly positive");
        } else if constexpr (std::is_same_v<T, Aids>) {
          if (d.gamma_mat.rows() != J || d.gamma_mat.cols() != J)
            throw InvalidDemandSpec("aids: gamma_mat must be J x J");
          if (d.beta_vec.size() != J || d.stone_weights.size() != J)
            throw InvalidDemandSpec("aids: vector size mismatch");
          if (!(d.budget_B > 0.0)) throw InvalidDemandSpec("aids: budget_B must be > 0");
          if (std::abs(d.stone_weights.sum() - 1.0) > 1e-12)
            throw InvalidDemandSpec("aids: stone_weights must sum to 1 within 1e-12");
        }
      },
      spec);
}

DemandEval eval_demand(const DemandSpec& spec, const Vector& p) {
  validate(spec);
  if (p.size() != n_products(spec))
    throw DimensionMismatch("price vector length does not match product count");
  require_positive_prices(p);
  return std::visit(
      [&](const auto& d) -> DemandEval {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Logit>) return eval_logit(d, p);
        else if constexpr (std::is_same_v<T, NestedLogit>) return eval_nested_logit(d, p);
        else if constexpr (std::is_same_v<T, Ces>) return eval_ces(d, p);
        else if constexpr (std::is_same_v<T, MixedLogit>) {
          if (const auto* ln = std::get_if<LogNormalMixing>(&d.mixing))
            return eval_mixed_lognormal(d, *ln, p);
          else
            return eval_mixed_gamma(d, std::get<GammaMixing>(d.mixing), p);
        } else if constexpr (std::is_same_v<T, Linear>) return eval_linear(d, p);
        else return eval_aids(d, p);
      },
      spec);
}

DerivedDemand derived_from_eval(const DemandSpec& spec, const Vector& p, const DemandEval& ev) {
  const int J = static_cast<int>(ev.q.size());
  DerivedDemand out;

  out.shares = std::visit(
      [&](const auto& d) -> Vector {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Ces>)
          return (p.array() * ev.q.array() / d.budget_B).matrix();
        else if constexpr (std::is_same_v<T, Aids>)
          return (p.array() * ev.q.array() / d.budget_B).matrix();
        else if constexpr (std::is_same_v<T, Linear>)
          return ev.q;
        else
          return ev.q / d.scale_M;
      },
      spec);

  out.eta.resize(J, J);
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < J; ++k) out.eta(j, k) = ev.jac(j, k) / ev.q[j];

  out.eps_own.resize(J);
  for (int j = 0; j < J; ++j) out.eps_own[j] = p[j] * out.eta(j, j);

  out.diversion.resize(J, J);
  out.delta_ratio.resize(J, J);
  for (int j = 0; j < J; ++j) {
    const double own = ev.jac(j, j);
    if (own == 0.0)
      throw SingularOwnSlope("own demand slope of product " + std::to_string(j) + " is zero");
    for (int l = 0; l < J; ++l) {
      out.diversion(j, l) = (j == l) ? -1.0 : -ev.jac(l, j) / own;
      out.delta_ratio(j, l) = (j == l) ? -1.0 : -ev.jac(j, l) / own;
    }
  }
  return out;
}

DerivedDemand derived_demand(const DemandSpec& spec, const Vector& p) {
  return derived_from_eval(spec, p, eval_demand(spec, p));
}

double curvature_index(const DemandSpec& spec, const Vector& p, int j, int k, int l) {
  const DemandEval ev = eval_demand(spec, p);
  const double den = ev.jac(j, k) * ev.jac(j, l);
  if (std::abs(den) < kUnderflowFloor)
    throw ZeroDenominator("curvature index: first derivative vanishes for (" +
                          std::to_string(j) + "," + std::to_string(k) + "," + std::to_string(l) +
                          ")");
  return ev.q[j] * ev.hess[j](k, l) / den;
}

FdAuditReport fd_derivative_audit(const DemandSpec& spec, const Vector& p, double step) {
  if (!(step > 0.0)) throw InputError("fd_derivative_audit: step must be > 0");
  const int J = static_cast<int>(p.size());
  const DemandEval ev = eval_demand(spec, p);

  Matrix jac_fd(J, J);
  std::vector<Matrix> djac(J); // djac[l] = d jac / d p_l
  for (int l = 0; l < J; ++l) {
    Vector pp = p, pm = p;
    pp[l] += step;
    pm[l] -= step;
    const DemandEval up = eval_demand(spec, pp); // OutOfDomain propagates
    const DemandEval dn = eval_demand(spec, pm);
    jac_fd.col(l) = (up.q - dn.q) / (2.0 * step);
    djac[l] = (up.jac - dn.jac) / (2.0 * step);
  }

  FdAuditReport rep{};
  rep.jac_rel_err = scaled_err(max_abs(ev.jac - jac_fd), max_abs(ev.jac));

  double num = 0.0, den = 0.0;
  for (int j = 0; j < J; ++j) {
    den = std::max(den, max_abs(ev.hess[j]));
    for (int k = 0; k < J; ++k)
      for (int l = 0; l < J; ++l)
        num = std::max(num, std::abs(ev.hess[j](k, l) - djac[l](j, k)));
  }
  rep.hess_rel_err = scaled_err(num, den);
  return rep;
}

}  // namespace passmat
