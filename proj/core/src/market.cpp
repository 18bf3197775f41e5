#include "passmat/market.hpp"

#include <algorithm>
#include <numeric>

namespace passmat {

Matrix ownership_from_partition(int J, const std::vector<std::vector<int>>& partition) {
  std::vector<int> owner(J, -1);
  int covered = 0;
  for (std::size_t f = 0; f < partition.size(); ++f) {
    if (partition[f].empty()) throw InvalidPartition("firm " + std::to_string(f) + " owns no products");
    for (int j : partition[f]) {
      if (j < 0 || j >= J)
        throw InvalidPartition("product index " + std::to_string(j) + " out of range");
      if (owner[j] != -1)
        throw InvalidPartition("product " + std::to_string(j) + " appears in two firms");
      owner[j] = static_cast<int>(f);
      ++covered;
    }
  }
  if (covered != J) throw InvalidPartition("partition does not cover all products");
  Matrix omega = Matrix::Zero(J, J);
  for (int j = 0; j < J; ++j)
    for (int l = 0; l < J; ++l) omega(j, l) = owner[j] == owner[l] ? 1.0 : 0.0;
  return omega;
}

std::vector<std::vector<int>> partition_from_ownership(const Matrix& omega) {
  const int J = static_cast<int>(omega.rows());
  std::vector<std::vector<int>> firms;
  std::vector<bool> seen(J, false);
  for (int j = 0; j < J; ++j) {
    if (seen[j]) continue;
    std::vector<int> members;
    for (int l = 0; l < J; ++l)
      if (omega(j, l) != 0.0) {
        members.push_back(l);
        seen[l] = true;
      }
    firms.push_back(std::move(members));
  }
  return firms;
}

Market build_market(const Vector& costs, const std::vector<std::vector<int>>& firm_partition,
                    const DemandSpec& demand, const std::string& label) {
  validate(demand);
  const int J = n_products(demand);
  if (static_cast<int>(costs.size()) != J)
    throw DimensionMismatch("cost vector length " + std::to_string(costs.size()) +
                            " does not match product count " + std::to_string(J));
  for (int j = 0; j < J; ++j)
    if (costs[j] < 0.0)
      throw InputError("cost of product " + std::to_string(j) + " is negative");
  Market m;
  m.n_products = J;
  m.cost = costs;
  m.firms = firm_partition;
  m.omega = ownership_from_partition(J, firm_partition);
  m.demand = demand;
  m.label = label;
  return m;
}

std::vector<double> SimulationConfig::shifter_grid() const {
  std::vector<double> grid(n_shifters);
  for (int i = 0; i < n_shifters; ++i)
    grid[i] = shifter_first + (shifter_last - shifter_first) * i / (n_shifters - 1);
  grid.front() = shifter_first; // endpoints exact
  grid.back() = shifter_last;
  return grid;
}

Market sample_market(const SimulationConfig& cfg, int index) {
  if (index < 0 || index >= cfg.n_markets)
    throw IndexOutOfRange("market index " + std::to_string(index) + " not in [0, " +
                          std::to_string(cfg.n_markets) + ")");
  Rng rng(cfg.base_seed + static_cast<std::uint64_t>(index));
  const int J = cfg.n_products;
  Vector delta(J), cost(J);
  for (int j = 0; j < J; ++j) delta[j] = rng.normal(cfg.delta_mean, cfg.delta_sd);
  for (int j = 0; j < J; ++j) cost[j] = rng.uniform(cfg.cost_low, cfg.cost_high);

  std::vector<std::vector<int>> firms;
  int next = 0;
  for (int size : cfg.firm_sizes) {
    std::vector<int> members(size);
    std::iota(members.begin(), members.end(), next);
    next += size;
    firms.push_back(std::move(members));
  }
  if (next != J) throw InvalidPartition("firm_sizes do not sum to n_products");

  Logit demand;
  demand.alpha = cfg.alpha;
  demand.delta = delta;
  demand.scale_M = 1.0;
  return build_market(cost, firms, demand, "sim-" + std::to_string(index));
}

Market apply_shifter(const Market& m, double s) {
  Market out = m;
  std::visit(
      [&](auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Linear> || std::is_same_v<T, Aids>) {
          throw UnsupportedDemand("apply_shifter: demand family has no mean utilities");
        } else {
          d.delta.array() += s;
        }
      },
      out.demand);
  return out;
}

}  // namespace passmat
