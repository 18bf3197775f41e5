#include "passmat/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <thread>

#include "passmat/equilibrium.hpp"
#include "passmat/passthrough.hpp"

namespace passmat {

namespace {

struct Cell {
  bool ok = false;
  SimRecord rec{};
  PriceRecord price[3];
  std::string failure;
};

Vector tax_vector(const SimulationConfig& cfg, int experiment, const Market& m) {
  Vector t = Vector::Zero(m.n_products);
  switch (experiment) {
    case 0:  // uniform
      t.setConstant(cfg.tax_size);
      break;
    case 1:  // all products of the first firm
      for (int j : m.firms.front()) t[j] = cfg.tax_size;
      break;
    case 2:  // single product
      t[0] = cfg.tax_size;
      break;
  }
  return t;
}

const char* kExperimentNames[3] = {"uniform", "firm", "single"};

Cell run_cell(const SimulationConfig& cfg, int market_index, double shifter) {
  Cell cell;
  try {
    const Market base = sample_market(cfg, market_index);
    const Market m = apply_shifter(base, shifter);

    const EquilibriumResult eq = solve_bertrand(m);
    if (!eq.converged) {
      cell.failure = "no convergence";
      return cell;
    }
    const PassThroughReport pt = exact_passthrough(m, eq.p_star, {0, 1, 2});
    const DerivedDemand dd = derived_demand(m.demand, eq.p_star);

    cell.rec.market_index = market_index;
    cell.rec.shifter = shifter;
    cell.rec.gamma_inf = pt.gamma_inf_norm;
    cell.rec.frob_k0 = pt.frobenius_errors.at(0);
    cell.rec.frob_k1 = pt.frobenius_errors.at(1);
    cell.rec.frob_k2 = pt.frobenius_errors.at(2);
    cell.rec.avg_share = dd.shares.mean();

    for (int ex = 0; ex < 3; ++ex) {
      const Vector t = tax_vector(cfg, ex, m);
      Market taxed = m;
      taxed.cost += t;
      const EquilibriumResult eq_taxed = solve_bertrand(taxed, eq.p_star);
      if (!eq_taxed.converged) {
        cell.failure = "taxed re-solve failed";
        return cell;
      }
      PriceRecord& pr = cell.price[ex];
      pr.market_index = market_index;
      pr.shifter = shifter;
      pr.experiment = kExperimentNames[ex];
      pr.avg_share = cell.rec.avg_share;
      pr.dp_exact = (eq_taxed.p_star - eq.p_star).mean();
      pr.dp_k1 = (pt.psi_trunc.at(1) * t).mean();
      pr.dp_smallshare = t.mean();  // logit small-share benchmark Psi ~ I
    }
    cell.ok = true;
  } catch (const Error& e) {
    cell.failure = e.what();
  }
  return cell;
}

}  // namespace

int thread_cap_from_env(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("PASSMAT_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

SimulationResult run_simulation(const SimulationConfig& cfg, int n_threads) {
  const std::vector<double> shifters = cfg.shifter_grid();
  const int n_cells = cfg.n_markets * static_cast<int>(shifters.size());
  std::vector<Cell> cells(n_cells);

  const int threads = thread_cap_from_env(n_threads);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n_cells) return;
      const int market = i / static_cast<int>(shifters.size());
      const int s_ix = i % static_cast<int>(shifters.size());
      cells[i] = run_cell(cfg, market, shifters[s_ix]);
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // cells are indexed by (market, shifter); emission order is fixed, so the
  // thread count never changes the output bytes
  SimulationResult out;
  for (int i = 0; i < n_cells; ++i) {
    const int market = i / static_cast<int>(shifters.size());
    const int s_ix = i % static_cast<int>(shifters.size());
    if (!cells[i].ok) {
      ++out.n_failures;
      out.failed_cells.push_back("market=" + std::to_string(market) +
                                 " shifter=" + std::to_string(shifters[s_ix]) + ": " +
                                 cells[i].failure);
      continue;
    }
    out.matrix_rows.push_back(cells[i].rec);
    for (int ex = 0; ex < 3; ++ex) out.price_rows.push_back(cells[i].price[ex]);
  }
  return out;
}

namespace {

void write_double(std::ostream& os, double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  os << buf;
}

}  // namespace

void write_matrix_csv(const std::string& path, const SimulationResult& result,
                      const RunManifest& mf) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot open '" + path + "' for writing");
  os << manifest_line(mf) << "\n";
  os << "market,shifter,gamma_inf,frob_K0,frob_K1,frob_K2\n";
  for (const SimRecord& r : result.matrix_rows) {
    os << r.market_index << ",";
    write_double(os, r.shifter);
    os << ",";
    write_double(os, r.gamma_inf);
    os << ",";
    write_double(os, r.frob_k0);
    os << ",";
    write_double(os, r.frob_k1);
    os << ",";
    write_double(os, r.frob_k2);
    os << "\n";
  }
}

void write_price_csv(const std::string& path, const SimulationResult& result,
                     const RunManifest& mf) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot open '" + path + "' for writing");
  os << manifest_line(mf) << "\n";
  os << "market,shifter,experiment,avg_share,dp_exact,dp_K1,dp_smallshare\n";
  for (const PriceRecord& r : result.price_rows) {
    os << r.market_index << ",";
    write_double(os, r.shifter);
    os << "," << r.experiment << ",";
    write_double(os, r.avg_share);
    os << ",";
    write_double(os, r.dp_exact);
    os << ",";
    write_double(os, r.dp_k1);
    os << ",";
    write_double(os, r.dp_smallshare);
    os << "\n";
  }
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n != y.size() || n < 2) throw DimensionMismatch("spearman: need two equal-length series");
  auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * (i + j) + 1.0;  // average rank on ties
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  const double mean = (n + 1) / 2.0;
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (rx[i] - mean) * (ry[i] - mean);
    dx += (rx[i] - mean) * (rx[i] - mean);
    dy += (ry[i] - mean) * (ry[i] - mean);
  }
  return num / std::sqrt(dx * dy);
}

}  // namespace passmat
