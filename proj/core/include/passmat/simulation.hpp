#pragma once

#include <string>
#include <vector>

#include "passmat/io.hpp"
#include "passmat/market.hpp"

namespace passmat {

/// One matrix-approximation record per solved (market, shifter) cell.
struct SimRecord {
  int market_index;
  double shifter;
  double gamma_inf;  // ||Gamma||_inf at equilibrium
  double frob_k0;
  double frob_k1;
  double frob_k2;
  double avg_share;
};

/// One price-response record per (market, shifter, experiment) cell.
/// dp_* are means over products: exact re-solved response to the tax,
/// first-order Neumann prediction, and the small-share (identity) prediction.
struct PriceRecord {
  int market_index;
  double shifter;
  std::string experiment;  // uniform | firm | single
  double avg_share;
  double dp_exact;
  double dp_k1;
  double dp_smallshare;
};

struct SimulationResult {
  std::vector<SimRecord> matrix_rows;
  std::vector<PriceRecord> price_rows;
  int n_failures = 0;
  std::vector<std::string> failed_cells;
};

/// Full sweep: n_markets x shifter grid, solved independently; deterministic
/// given the config. n_threads <= 0 picks hardware concurrency capped by
/// PASSMAT_THREADS.
SimulationResult run_simulation(const SimulationConfig& cfg, int n_threads = 0);

int thread_cap_from_env(int requested);

void write_matrix_csv(const std::string& path, const SimulationResult& result,
                      const RunManifest& mf);
void write_price_csv(const std::string& path, const SimulationResult& result,
                     const RunManifest& mf);

/// Spearman rank correlation (average ranks on ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace passmat
