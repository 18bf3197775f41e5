#include <doctest.h>

#include <cmath>

#include "passmat/market.hpp"

using namespace passmat;

namespace {

Logit simple_logit(int J) {
  Logit d;
  d.alpha = 1.0;
  d.delta = Vector::Constant(J, 0.5);
  d.scale_M = 1.0;
  return d;
}

}  // namespace

TEST_CASE("ownership matrix from partitions") {
  SUBCASE("three single-product firms give the identity") {
    const Matrix omega = ownership_from_partition(3, {{0}, {1}, {2}});
    CHECK(omega.isIdentity(0.0));
  }
  SUBCASE("two three-product firms give two all-ones blocks") {
    const Matrix omega = ownership_from_partition(6, {{0, 1, 2}, {3, 4, 5}});
    for (int j = 0; j < 6; ++j)
      for (int l = 0; l < 6; ++l)
        CHECK(omega(j, l) == ((j / 3 == l / 3) ? 1.0 : 0.0));
  }
  SUBCASE("overlap and gaps are rejected") {
    CHECK_THROWS_AS(ownership_from_partition(2, {{0}, {0, 1}}), InvalidPartition);
    CHECK_THROWS_AS(ownership_from_partition(3, {{0}, {1}}), InvalidPartition);
    CHECK_THROWS_AS(ownership_from_partition(2, {{0}, {1}, {}}), InvalidPartition);
  }
}

TEST_CASE("build_market validates dimensions and derives omega") {
  const Market m = build_market(Vector{{0.5, 0.6, 0.7}}, {{0, 1}, {2}}, simple_logit(3), "t");
  CHECK(m.omega(0, 1) == 1.0);
  CHECK(m.omega(0, 2) == 0.0);
  CHECK(m.omega.diagonal().isApproxToConstant(1.0));
  CHECK((m.omega - m.omega.transpose()).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(build_market(Vector{{0.5}}, {{0, 1}}, simple_logit(2), ""), DimensionMismatch);

  // rebuild from the decomposed partition reproduces omega
  const auto firms = partition_from_ownership(m.omega);
  const Market m2 = build_market(m.cost, firms, m.demand, m.label);
  CHECK((m.omega - m2.omega).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sample_market is deterministic and matches the design") {
  SimulationConfig cfg;
  cfg.base_seed = 42;

  const Market a = sample_market(cfg, 7);
  const Market b = sample_market(cfg, 7);
  CHECK((a.cost - b.cost).cwiseAbs().maxCoeff() == 0.0);
  CHECK((std::get<Logit>(a.demand).delta - std::get<Logit>(b.demand).delta)
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK(a.firms == std::vector<std::vector<int>>{{0, 1, 2}, {3, 4, 5}});
  CHECK(std::get<Logit>(a.demand).alpha == 1.0);
  CHECK(std::get<Logit>(a.demand).scale_M == 1.0);

  CHECK_THROWS_AS(sample_market(cfg, cfg.n_markets), IndexOutOfRange);

  // costs stay in [0.2, 0.8]; pooled delta mean within the CLT band
  double delta_sum = 0.0;
  int n = 0;
  for (int i = 0; i < cfg.n_markets; ++i) {
    const Market m = sample_market(cfg, i);
    CHECK((m.cost.array() >= cfg.cost_low).all());
    CHECK((m.cost.array() <= cfg.cost_high).all());
    delta_sum += std::get<Logit>(m.demand).delta.sum();
    n += m.n_products;
  }
  const double band = 3.0 * cfg.delta_sd / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(delta_sum / n - cfg.delta_mean) < band);
}

TEST_CASE("shifter grid endpoints are exact") {
  SimulationConfig cfg;
  const auto grid = cfg.shifter_grid();
  CHECK(grid.size() == 10);
  CHECK(grid.front() == 0.0);
  CHECK(grid.back() == -6.0);
  for (std::size_t i = 1; i < grid.size(); ++i)
    CHECK(grid[i] - grid[i - 1] == doctest::Approx(-6.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("apply_shifter") {
  SimulationConfig cfg;
  const Market m = sample_market(cfg, 0);

  SUBCASE("zero shift leaves the market unchanged") {
    const Market s = apply_shifter(m, 0.0);
    CHECK((std::get<Logit>(s.demand).delta - std::get<Logit>(m.demand).delta)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
  SUBCASE("a negative shift lowers every share at fixed prices") {
    const Vector p = Vector::Constant(6, 1.0);
    const Vector q0 = eval_demand(m.demand, p).q;
    const Vector q1 = eval_demand(apply_shifter(m, -6.0).demand, p).q;
    CHECK((q1.array() < q0.array()).all());
  }
  SUBCASE("ces mean utilities shift too") {
    Ces ces;
    ces.sigma_ces = 3.0;
    ces.delta = Vector{{0.1, 0.2}};
    ces.budget_B = 1.0;
    const Market cm = build_market(Vector{{0.3, 0.3}}, {{0}, {1}}, ces, "");
    const Market shifted = apply_shifter(cm, -1.0);
    CHECK(std::get<Ces>(shifted.demand).delta[0] == doctest::Approx(-0.9));
  }
  SUBCASE("linear demand is rejected") {
    Linear lin;
    lin.gamma_vec = Vector{{5.0}};
    lin.beta_mat = Matrix{{1.0}};
    const Market lm = build_market(Vector{{1.0}}, {{0}}, lin, "");
    CHECK_THROWS_AS(apply_shifter(lm, -1.0), UnsupportedDemand);
  }
}

TEST_CASE("rng stream is reproducible and transforms are sane") {
  Rng a(123), b(123);
  for (int i = 0; i < 10; ++i) CHECK(a.uniform() == b.uniform());
  Rng c(7);
  double mean = 0.0;
  const int N = 20000;
  for (int i = 0; i < N; ++i) mean += c.normal();
  CHECK(std::abs(mean / N) < 0.03);
}
