#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "passmat/demand.hpp"
#include "passmat/types.hpp"

namespace passmat {

/// Deterministic, portable random stream: mt19937_64 bits mapped to doubles
/// by explicit transforms (never std::*_distribution, whose output is
/// implementation-defined). Normals via Box-Muller on the uniform stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  /// Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// A market: marginal costs, a firm partition of the products, the derived
/// ownership matrix, and the demand system. Immutable value type.
struct Market {
  int n_products = 0;
  Vector cost;
  std::vector<std::vector<int>> firms; // partition of {0..J-1}
  Matrix omega;                        // derived from firms, never stored independently
  DemandSpec demand;
  std::string label;
};

/// Validates the partition, materializes omega, and checks invariants.
Market build_market(const Vector& costs, const std::vector<std::vector<int>>& firm_partition,
                    const DemandSpec& demand, const std::string& label = "");

Matrix ownership_from_partition(int J, const std::vector<std::vector<int>>& partition);
std::vector<std::vector<int>> partition_from_ownership(const Matrix& omega);

/// Simulation design: two symmetric three-product firms, logit demand,
/// delta ~ N(1.2, 0.4^2), cost ~ U[0.2, 0.8], demand shifter grid of 10
/// values from 0 to -6, tax size 0.1.
struct SimulationConfig {
  int n_markets = 100;
  int n_products = 6;
  std::vector<int> firm_sizes{3, 3};
  double delta_mean = 1.2;
  double delta_sd = 0.4;
  double cost_low = 0.2;
  double cost_high = 0.8;
  double alpha = 1.0;
  int n_shifters = 10;
  double shifter_first = 0.0;
  double shifter_last = -6.0;
  double tax_size = 0.1;
  std::uint64_t base_seed = 20240901;

  std::vector<double> shifter_grid() const;
};

/// Market `index` of the simulation design. Deterministic: the per-market
/// seed is base_seed + index; all delta draws precede all cost draws.
Market sample_market(const SimulationConfig& cfg, int index);

/// Shift every mean utility by s (logit family and CES). Linear/AIDS have no
/// mean-utility field and raise UnsupportedDemand.
Market apply_shifter(const Market& m, double s);

}  // namespace passmat
