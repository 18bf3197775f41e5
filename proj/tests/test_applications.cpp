#include <doctest.h>

#include <cmath>

#include "passmat/applications.hpp"

using namespace passmat;

namespace {

Market random_logit_market(std::uint64_t seed, int J, std::vector<std::vector<int>> firms) {
  Rng rng(seed);
  Logit d;
  d.alpha = 1.0;
  d.scale_M = 1.0;
  d.delta.resize(J);
  Vector cost(J);
  for (int j = 0; j < J; ++j) d.delta[j] = rng.normal(1.0, 0.4);
  for (int j = 0; j < J; ++j) cost[j] = rng.uniform(0.3, 0.8);
  return build_market(cost, firms, d, "random logit");
}

Market symmetric_logit_duopoly(double delta, double cost) {
  Logit d;
  d.alpha = 1.0;
  d.delta = Vector::Constant(2, delta);
  d.scale_M = 1.0;
  return build_market(Vector::Constant(2, cost), {{0}, {1}}, d, "duopoly");
}

}  // namespace

TEST_CASE("percentage pass-through") {
  SUBCASE("identity fixture") {
    const Vector p = Vector::Constant(2, 1.5);
    const PercentageReport rep = percentage_passthrough(Matrix::Identity(2, 2), p, p);
    CHECK(rep.psi_tau.isIdentity(1e-15));
  }
  SUBCASE("single-product ces: psi_tau = I within 1e-8") {
    Ces d;
    d.sigma_ces = 4.0;
    d.delta = Vector{{-19.0}};
    d.budget_B = 1.0;
    const Market m = build_market(Vector{{2.0}}, {{0}}, d, "");
    const EquilibriumResult eq = solve_bertrand(m);
    REQUIRE(eq.converged);
    const PassThroughReport pt = exact_passthrough(m, eq.p_star, {});
    const PercentageReport rep =
        percentage_passthrough(pt.psi_exact, eq.p_star, m.cost, &m.demand);
    CHECK(rep.limit_form == LimitForm::CesIdentity);
    CHECK((rep.psi_tau - Matrix::Identity(1, 1)).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("logit deviation from diag(1 - m) falls by 40% when shares halve") {
    const Market m = random_logit_market(3, 3, {{0}, {1}, {2}});
    auto solve_at = [&](double shift) {
      const Market ms = apply_shifter(m, shift);
      const EquilibriumResult eq = solve_bertrand(ms);
      REQUIRE(eq.converged);
      const PassThroughReport pt = exact_passthrough(ms, eq.p_star, {});
      const double share = derived_demand(ms.demand, eq.p_star).shares.sum();
      const double dev =
          percentage_passthrough(pt.psi_exact, eq.p_star, ms.cost, &ms.demand).deviation;
      return std::pair<double, double>{share, dev};
    };
    const auto [share0, dev0] = solve_at(0.0);
    // bisect the shifter until total equilibrium share is roughly halved
    double lo = -4.0, hi = 0.0, shift = -1.0;
    for (int it = 0; it < 40; ++it) {
      shift = 0.5 * (lo + hi);
      const double s = solve_at(shift).first;
      if (s > 0.5 * share0)
        hi = shift;
      else
        lo = shift;
    }
    const auto [share1, dev1] = solve_at(shift);
    CHECK(share1 == doctest::Approx(0.5 * share0).epsilon(1e-2));
    CHECK(dev1 <= 0.6 * dev0);
  }
  SUBCASE("nonpositive inputs are rejected") {
    CHECK_THROWS_AS(
        percentage_passthrough(Matrix::Identity(1, 1), Vector{{1.0}}, Vector{{0.0}}),
        NonPositivePriceOrCost);
  }
}

TEST_CASE("consumer surplus delta") {
  const Vector R{{2.0, 3.0}};
  SUBCASE("zero shock gives zero") {
    CHECK(consumer_surplus_delta(R, Matrix::Identity(2, 2), Vector::Zero(2)) == 0.0);
  }
  SUBCASE("ces reduced form is a plain revenue sum") {
    PercentageReport rep;
    rep.psi_tau = Matrix::Identity(2, 2);
    rep.limit_form = LimitForm::CesIdentity;
    rep.limit_matrix = Matrix::Identity(2, 2);
    const Vector dtau = Vector::Constant(2, 0.01);
    const CsDelta cs = consumer_surplus_delta(R, rep, dtau);
    CHECK(cs.reduced_form.has_value());
    CHECK(*cs.reduced_form == doctest::Approx(-0.01 * R.sum()));
  }
  SUBCASE("full and reduced forms converge as logit shares shrink") {
    const Market m = random_logit_market(9, 3, {{0}, {1}, {2}});
    auto gap_at = [&](double shift) {
      const Market ms = apply_shifter(m, shift);
      const EquilibriumResult eq = solve_bertrand(ms);
      REQUIRE(eq.converged);
      const PassThroughReport pt = exact_passthrough(ms, eq.p_star, {});
      const PercentageReport rep =
          percentage_passthrough(pt.psi_exact, eq.p_star, ms.cost, &ms.demand);
      const Vector q = eval_demand(ms.demand, eq.p_star).q;
      const Vector revenues = q.cwiseProduct(eq.p_star);
      const CsDelta cs = consumer_surplus_delta(revenues, rep, Vector::Constant(3, 0.01));
      return std::abs(cs.dcs - *cs.reduced_form);
    };
    CHECK(gap_at(-6.0) < gap_at(0.0));
  }
  SUBCASE("psi-tau chain equals quantity-weighted price changes") {
    const Market m = random_logit_market(11, 3, {{0, 1}, {2}});
    const EquilibriumResult eq = solve_bertrand(m);
    REQUIRE(eq.converged);
    const PassThroughReport pt = exact_passthrough(m, eq.p_star, {});
    const PercentageReport rep =
        percentage_passthrough(pt.psi_exact, eq.p_star, m.cost, &m.demand);
    const Vector q = eval_demand(m.demand, eq.p_star).q;
    const Vector revenues = q.cwiseProduct(eq.p_star);
    const Vector dtau{{0.01, -0.02, 0.005}};
    const double dcs = consumer_surplus_delta(revenues, rep.psi_tau, dtau);
    // dp = Psi (c_hat dtau): the same first-order change in levels
    const Vector dp = pt.psi_exact * m.cost.cwiseProduct(dtau);
    CHECK(std::abs(dcs - (-q.dot(dp))) < 1e-10);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(consumer_surplus_delta(R, Matrix::Identity(3, 3), Vector::Zero(3)),
                    DimensionMismatch);
  }
}

TEST_CASE("merger scenarios validate coarsening") {
  CHECK_NOTHROW(make_merger_scenario(4, {{0, 1}, {2, 3}}, {{0, 1, 2, 3}}));
  CHECK_THROWS_AS(make_merger_scenario(4, {{0, 1}, {2, 3}}, {{0, 2}, {1, 3}}),
                  InvalidPartition);
  const MergerScenario scen = make_merger_scenario(3, {{0}, {1}, {2}}, {{0, 1}, {2}});
  CHECK(scen.affected == std::vector<int>{0, 1});
}

TEST_CASE("upp vector") {
  SUBCASE("no ownership change gives zero") {
    const Market m = random_logit_market(13, 3, {{0}, {1}, {2}});
    const EquilibriumResult eq = solve_bertrand(m);
    const MergerScenario scen = make_merger_scenario(3, m.firms, m.firms);
    CHECK(upp_vector(m, eq.p_star, scen).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("symmetric duopoly to monopoly: g = m D on both products") {
    const Market m = symmetric_logit_duopoly(0.8, 0.5);
    const EquilibriumResult eq = solve_bertrand(m);
    REQUIRE(eq.converged);
    const MergerScenario scen = make_merger_scenario(2, {{0}, {1}}, {{0, 1}});
    const Vector g = upp_vector(m, eq.p_star, scen);
    const DerivedDemand dd = derived_demand(m.demand, eq.p_star);
    const double margin = eq.p_star[0] - m.cost[0];
    const double expected = margin * dd.diversion(0, 1);  // s/(1-s) diversion
    CHECK(g[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(g[1] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(g[0] > 0.0);
  }
  SUBCASE("an unaffected outsider has zero entry") {
    const Market m = random_logit_market(17, 3, {{0}, {1}, {2}});
    const EquilibriumResult eq = solve_bertrand(m);
    const MergerScenario scen = make_merger_scenario(3, {{0}, {1}, {2}}, {{0, 1}, {2}});
    const Vector g = upp_vector(m, eq.p_star, scen);
    CHECK(g[2] == 0.0);
    CHECK(g[0] > 0.0);
    CHECK(g[1] > 0.0);
  }
}

TEST_CASE("pseudo tax") {
  SUBCASE("single-product pre-merger firms: t equals g exactly") {
    const Market m = random_logit_market(19, 4, {{0}, {1}, {2}, {3}});
    const EquilibriumResult eq = solve_bertrand(m);
    const MergerScenario scen = make_merger_scenario(4, m.firms, {{0, 1}, {2}, {3}});
    const Vector g = upp_vector(m, eq.p_star, scen);
    const Vector t = pseudo_tax(m, eq.p_star, scen);
    CHECK((t - g).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("multiproduct pre-merger firms: Lambda_pre t reproduces g") {
    const Market m = random_logit_market(23, 4, {{0, 1}, {2}, {3}});
    const EquilibriumResult eq = solve_bertrand(m);
    const MergerScenario scen = make_merger_scenario(4, m.firms, {{0, 1}, {2, 3}});
    const Vector g = upp_vector(m, eq.p_star, scen);
    const Vector t = pseudo_tax(m, eq.p_star, scen);
    const Matrix lam = lambda_matrix(m, eq.p_star);
    CHECK((lam * t - g).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("no merger gives zero") {
    const Market m = random_logit_market(29, 2, {{0}, {1}});
    const EquilibriumResult eq = solve_bertrand(m);
    const MergerScenario scen = make_merger_scenario(2, m.firms, m.firms);
    CHECK(pseudo_tax(m, eq.p_star, scen).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("upward-pricing-pressure slope identity dg/dp = C_post - C_pre") {
  const Market m = random_logit_market(31, 4, {{0, 1}, {2}, {3}});
  const Vector p = m.cost.array() + 0.9;
  const MergerScenario scen = make_merger_scenario(4, m.firms, {{0, 1}, {2, 3}});

  const Market post = build_market(m.cost, scen.post_partition, m.demand, "");
  const Matrix slope_diff =
      jacobian_decomposition(post, p).c_mat - jacobian_decomposition(m, p).c_mat;

  // finite differences of g
  const double h = 1e-6;
  Matrix dg(4, 4);
  for (int k = 0; k < 4; ++k) {
    Vector pp = p, pm = p;
    pp[k] += h;
    pm[k] -= h;
    // silence the off-equilibrium warning by computing g directly
    const DerivedDemand du = derived_demand(m.demand, pp);
    const DerivedDemand dn = derived_demand(m.demand, pm);
    for (int j = 0; j < 4; ++j) {
      double gu = 0.0, gd = 0.0;
      for (int l = 0; l < 4; ++l)
        if (l != j) {
          const double dom = scen.omega_post(j, l) - scen.omega_pre(j, l);
          gu += dom * du.diversion(j, l) * (pp[l] - m.cost[l]);
          gd += dom * dn.diversion(j, l) * (pm[l] - m.cost[l]);
        }
      dg(j, k) = (gu - gd) / (2 * h);
    }
  }
  CHECK((dg - slope_diff).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("merger price effects") {
  SUBCASE("no merger: all methods give zero") {
    const Market m = random_logit_market(37, 2, {{0}, {1}});
    const EquilibriumResult eq = solve_bertrand(m);
    const MergerScenario scen = make_merger_scenario(2, m.firms, m.firms);
    for (MergerMethod method :
         {MergerMethod::PreJacobian, MergerMethod::JaffeWeyl, MergerMethod::ThinTailDiag})
      CHECK(merger_price_effects(m, eq.p_star, scen, method).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("full report on a 2+2 merger to monopoly") {
    const Market m = random_logit_market(41, 4, {{0, 1}, {2, 3}});
    const MergerScenario scen = make_merger_scenario(4, m.firms, {{0, 1, 2, 3}});
    const MergerReport rep = merger_report(m, scen);
    CHECK(rep.resolve_converged);
    CHECK((rep.dp_true.array() > 0.0).all());  // merger to monopoly raises all prices
    CHECK(rep.jacobian_identity_gap < 1e-9);
    CHECK(rep.errors_vs_true.at("pre_jacobian") < rep.dp_true.cwiseAbs().maxCoeff());
    // first-order methods approximate the truth to first order
    CHECK(rep.errors_vs_true.at("jaffe_weyl") < rep.dp_true.cwiseAbs().maxCoeff());
  }
  SUBCASE("wedge-scaled convergence order is at least 1.8") {
    const Market m = random_logit_market(43, 4, {{0, 1}, {2, 3}});
    const EquilibriumResult eq = solve_bertrand(m);
    REQUIRE(eq.converged);
    const MergerScenario scen = make_merger_scenario(4, m.firms, {{0, 1, 2, 3}});
    const Vector g = upp_vector(m, eq.p_star, scen);
    const JacobianDecomposition d_pre = jacobian_decomposition(m, eq.p_star);
    const Market post = build_market(m.cost, scen.post_partition, m.demand, "");
    const JacobianDecomposition d_post = jacobian_decomposition(post, eq.p_star);

    std::vector<double> errs_pre, errs_jw;
    for (double eps : {0.125, 0.0625, 0.03125}) {
      const Vector p_true = solve_wedge_scaled(m, scen, eps, eq.p_star);
      const Vector dp_true = p_true - eq.p_star;
      const Vector dp_pre =
          -Eigen::PartialPivLU<Matrix>(d_pre.j_f).solve(eps * g);
      const Matrix jw = d_pre.j_f + eps * (d_post.c_mat - d_pre.c_mat);
      const Vector dp_jw = -Eigen::PartialPivLU<Matrix>(jw).solve(eps * g);
      errs_pre.push_back((dp_pre - dp_true).cwiseAbs().maxCoeff());
      errs_jw.push_back((dp_jw - dp_true).cwiseAbs().maxCoeff());
    }
    for (int i = 0; i < 2; ++i) {
      CHECK(std::log2(errs_pre[i] / errs_pre[i + 1]) >= 1.8);
      CHECK(std::log2(errs_jw[i] / errs_jw[i + 1]) >= 1.8);
    }
  }
  SUBCASE("wedge at eps = 1 is the true post-merger equilibrium") {
    const Market m = random_logit_market(47, 4, {{0, 1}, {2, 3}});
    const EquilibriumResult eq = solve_bertrand(m);
    const MergerScenario scen = make_merger_scenario(4, m.firms, {{0, 1, 2, 3}});
    const Vector p_wedge = solve_wedge_scaled(m, scen, 1.0, eq.p_star);
    const ResolveResult truth = resolve_post_merger(m, scen, eq.p_star);
    REQUIRE(truth.converged);
    CHECK((p_wedge - truth.p_post).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("diagonal merger benchmarks in their validity regimes") {
  SimulationConfig cfg;
  SUBCASE("pre-merger Jacobian within 5% at small shares (shifter -4)") {
    for (int i = 0; i < 5; ++i) {
      const Market m = apply_shifter(sample_market(cfg, i), -4.0);
      const MergerScenario scen = make_merger_scenario(6, m.firms, {{0, 1, 2, 3, 4, 5}});
      const EquilibriumResult eq = solve_bertrand(m);
      REQUIRE(eq.converged);
      const Vector dp = merger_price_effects(m, eq.p_star, scen, MergerMethod::PreJacobian);
      const ResolveResult truth = resolve_post_merger(m, scen, eq.p_star);
      REQUIRE(truth.converged);
      CHECK((dp - truth.dp_true).cwiseAbs().maxCoeff() <
            0.05 * truth.dp_true.cwiseAbs().maxCoeff());
    }
  }
  SUBCASE("thin-tail diagonal within 15% in the high-price ray regime") {
    // the elasticity benchmark is a price-ray limit: eps_jj must be large,
    // which a demand shifter alone never delivers
    for (int i = 0; i < 5; ++i) {
      Market m = sample_market(cfg, i);
      m.cost *= 30.0;
      const MergerScenario scen = make_merger_scenario(6, m.firms, {{0, 1, 2, 3, 4, 5}});
      const EquilibriumResult eq = solve_bertrand(m);
      REQUIRE(eq.converged);
      const Vector dp = merger_price_effects(m, eq.p_star, scen, MergerMethod::ThinTailDiag);
      const ResolveResult truth = resolve_post_merger(m, scen, eq.p_star);
      REQUIRE(truth.converged);
      CHECK((dp - truth.dp_true).cwiseAbs().maxCoeff() <
            0.15 * truth.dp_true.cwiseAbs().maxCoeff());
    }
  }
}

TEST_CASE("resolve ranks mergers consistently with the first-order methods") {
  // across random mergers, bigger first-order effects line up with bigger
  // true effects
  std::vector<double> first_order, truth;
  for (int s = 0; s < 50; ++s) {
    const Market m = random_logit_market(100 + s, 4, {{0, 1}, {2}, {3}});
    const MergerScenario scen = make_merger_scenario(4, m.firms, {{0, 1, 2}, {3}});
    const EquilibriumResult eq = solve_bertrand(m);
    if (!eq.converged) continue;
    first_order.push_back(
        merger_price_effects(m, eq.p_star, scen, MergerMethod::PreJacobian).mean());
    truth.push_back(resolve_post_merger(m, scen, eq.p_star).dp_true.mean());
  }
  // Spearman-style check via sorted-order agreement on a coarse split
  int concordant = 0, total = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (std::size_t j = i + 1; j < truth.size(); ++j) {
      ++total;
      if ((first_order[i] - first_order[j]) * (truth[i] - truth[j]) > 0.0) ++concordant;
    }
  CHECK(static_cast<double>(concordant) / total > 0.9);
}
