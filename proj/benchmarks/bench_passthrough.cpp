#include <benchmark/benchmark.h>

#include "passmat/equilibrium.hpp"
#include "passmat/passthrough.hpp"

using namespace passmat;

namespace {

Market sim_market(int index) {
  SimulationConfig cfg;
  cfg.base_seed = 20240901;
  return sample_market(cfg, index);
}

}  // namespace

static void BM_EvalDemand(benchmark::State& state) {
  const Market m = sim_market(0);
  const Vector p = Vector::Constant(6, 1.5);
  for (auto _ : state) benchmark::DoNotOptimize(eval_demand(m.demand, p));
}
BENCHMARK(BM_EvalDemand);

static void BM_SolveBertrand(benchmark::State& state) {
  const Market m = sim_market(1);
  for (auto _ : state) benchmark::DoNotOptimize(solve_bertrand(m));
}
BENCHMARK(BM_SolveBertrand);

static void BM_JacobianDecomposition(benchmark::State& state) {
  const Market m = sim_market(2);
  const Vector p = solve_bertrand(m).p_star;
  for (auto _ : state) benchmark::DoNotOptimize(jacobian_decomposition(m, p));
}
BENCHMARK(BM_JacobianDecomposition);

static void BM_ExactPassthrough(benchmark::State& state) {
  const Market m = sim_market(3);
  const Vector p = solve_bertrand(m).p_star;
  for (auto _ : state) benchmark::DoNotOptimize(exact_passthrough(m, p, {0, 1, 2}));
}
BENCHMARK(BM_ExactPassthrough);

BENCHMARK_MAIN();
