// passmat: equilibrium pass-through analysis for multiproduct oligopoly.
// Subcommands: analyze | merger | simulate | smallshare.
// Exit codes: 0 ok, 1 input error, 2 numerical non-convergence.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "passmat/applications.hpp"
#include "passmat/asymptotics.hpp"
#include "passmat/equilibrium.hpp"
#include "passmat/io.hpp"
#include "passmat/passthrough.hpp"
#include "passmat/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace passmat;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNoConvergence = 2;

void write_json(const fs::path& path, const json& doc) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot open '" + path.string() + "' for writing");
  os << doc.dump(2) << "\n";
}

void write_matrix_as_csv(const fs::path& path, const Matrix& m, const std::string& header) {
  std::ofstream os(path);
  os << "# " << header << "\n";
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) os << (j ? "," : "") << m(i, j);
    os << "\n";
  }
}

std::vector<int> parse_orders(const std::string& csv) {
  std::vector<int> orders;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    orders.push_back(std::stoi(tok));
  }
  return orders;
}

struct AnalyzeArgs {
  std::string market_file;
  std::string out_dir = ".";
  std::string format = "json";
  double tol = 1e-10;
  bool passthrough = true;
  bool decompose = false;
  bool smallshare = false;
  std::string neumann;
  double welfare = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
};

int cmd_analyze(const AnalyzeArgs& args) {
  const Market m = load_market(args.market_file);
  const RunManifest mf =
      make_manifest("analyze", {args.market_file}, args.seed, market_to_json(m).dump());

  SolveOptions opts;
  opts.tol = args.tol;
  const EquilibriumResult eq = solve_bertrand(m, opts);

  json rep;
  rep["manifest"] = manifest_json(mf);
  rep["label"] = m.label;
  rep["converged"] = eq.converged;
  rep["residual_norm"] = eq.residual_norm;
  rep["iterations"] = eq.iterations;
  rep["soc_ok"] = eq.soc_ok;
  rep["p_star"] = vector_to_json(eq.p_star);
  rep["margins_absolute"] = vector_to_json(eq.p_star - m.cost);

  const fs::path out = fs::path(args.out_dir);
  fs::create_directories(out);

  if (eq.converged) {
    const DerivedDemand dd = derived_demand(m.demand, eq.p_star);
    rep["shares"] = vector_to_json(dd.shares);
    rep["eps_own"] = vector_to_json(dd.eps_own);

    if (args.passthrough || !args.neumann.empty()) {
      const std::vector<int> orders = args.neumann.empty() ? std::vector<int>{0, 1, 2}
                                                           : parse_orders(args.neumann);
      const PassThroughReport pt = exact_passthrough(m, eq.p_star, orders);
      rep["psi"] = matrix_to_json(pt.psi_exact);
      rep["lambda"] = matrix_to_json(pt.lambda);
      json trunc;
      for (const auto& [K, psi_k] : pt.psi_trunc) {
        trunc[std::to_string(K)] = {{"psi", matrix_to_json(psi_k)},
                                    {"frobenius_error", pt.frobenius_errors.at(K)}};
      }
      rep["neumann"] = trunc;
      rep["diagnostics"] = {{"rho_gamma", pt.rho_gamma},
                            {"gamma_inf_norm", pt.gamma_inf_norm},
                            {"jf_condition", pt.jf_condition},
                            {"neumann_divergent", pt.neumann_divergent}};
      if (args.format == "csv") write_matrix_as_csv(out / "psi.csv", pt.psi_exact, manifest_line(mf));

      if (!std::isnan(args.welfare)) {
        const PercentageReport pct =
            percentage_passthrough(pt.psi_exact, eq.p_star, m.cost, &m.demand);
        const Vector q = eval_demand(m.demand, eq.p_star).q;
        const Vector revenues = q.cwiseProduct(eq.p_star);
        const Vector dtau = Vector::Constant(m.n_products, args.welfare);
        const CsDelta cs = consumer_surplus_delta(revenues, pct, dtau);
        json w;
        w["psi_tau"] = matrix_to_json(pct.psi_tau);
        w["dtau"] = args.welfare;
        w["dcs"] = cs.dcs;
        if (cs.reduced_form) w["dcs_reduced_form"] = *cs.reduced_form;
        if (pct.limit_form != LimitForm::None) w["limit_deviation"] = pct.deviation;
        rep["welfare"] = w;
      }
    }
    if (args.decompose) {
      const JacobianDecomposition d = jacobian_decomposition(m, eq.p_star);
      rep["decomposition"] = {{"j_f", matrix_to_json(d.j_f)},
                              {"k_mat", matrix_to_json(d.k_mat)},
                              {"c_mat", matrix_to_json(d.c_mat)},
                              {"a_diag", vector_to_json(d.a_diag)},
                              {"gamma_inf_norm", d.inf_norm},
                              {"spectral_radius", d.spectral_radius},
                              {"sigma_max", d.sigma_max}};
    }
    if (args.smallshare) {
      const ThinTailDiag tt = thin_tail_diag_approx(m, eq.p_star);
      rep["thin_tail_diag"] = {{"diag", vector_to_json(tt.diag)},
                               {"inelastic", tt.inelastic},
                               {"covered_families", tt.covered_families}};
    }
  }

  write_json(out / "analyze_report.json", rep);
  std::cout << (out / "analyze_report.json").string() << "\n";
  return eq.converged ? kExitOk : kExitNoConvergence;
}

struct MergerArgs {
  std::string market_file;
  std::string scenario_file;
  std::string out_dir = ".";
  std::string format = "json";
  double tol = 1e-10;
  std::uint64_t seed = 0;
};

int cmd_merger(const MergerArgs& args) {
  const Market m = load_market(args.market_file);
  const MergerScenario scen = load_scenario(args.scenario_file, m);
  const RunManifest mf = make_manifest("merger", {args.market_file, args.scenario_file},
                                       args.seed, market_to_json(m).dump());
  SolveOptions opts;
  opts.tol = args.tol;
  const MergerReport rep = merger_report(m, scen, opts);

  json doc;
  doc["manifest"] = manifest_json(mf);
  doc["p0"] = vector_to_json(rep.p0);
  doc["upp"] = vector_to_json(rep.upp);
  doc["pseudo_tax"] = vector_to_json(rep.pseudo_tax);
  doc["dp_pretax"] = vector_to_json(rep.dp_pretax);
  doc["dp_jw"] = vector_to_json(rep.dp_jw);
  doc["dp_thin_tail"] = vector_to_json(rep.dp_thin_tail);
  doc["dp_true"] = vector_to_json(rep.dp_true);
  doc["p_post"] = vector_to_json(rep.p_post);
  doc["slope_diff"] = matrix_to_json(rep.slope_diff);
  doc["jacobian_identity_gap"] = rep.jacobian_identity_gap;
  doc["resolve_converged"] = rep.resolve_converged;
  doc["errors_vs_true"] = rep.errors_vs_true;
  doc["affected_products"] = scen.affected;

  const fs::path out = fs::path(args.out_dir);
  fs::create_directories(out);
  write_json(out / "merger_report.json", doc);
  if (args.format == "csv") write_matrix_as_csv(out / "slope_diff.csv", rep.slope_diff, manifest_line(mf));
  std::cout << (out / "merger_report.json").string() << "\n";
  return rep.resolve_converged ? kExitOk : kExitNoConvergence;
}

struct SimulateArgs {
  std::string config_file;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
};

SimulationConfig config_from_file(const std::string& path) {
  SimulationConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw InputError("config file '" + path + "': " + e.what());
  }
  cfg.n_markets = doc.value("n_markets", cfg.n_markets);
  cfg.n_products = doc.value("n_products", cfg.n_products);
  if (doc.contains("firm_sizes")) cfg.firm_sizes = doc["firm_sizes"].get<std::vector<int>>();
  cfg.delta_mean = doc.value("delta_mean", cfg.delta_mean);
  cfg.delta_sd = doc.value("delta_sd", cfg.delta_sd);
  cfg.cost_low = doc.value("cost_low", cfg.cost_low);
  cfg.cost_high = doc.value("cost_high", cfg.cost_high);
  cfg.alpha = doc.value("alpha", cfg.alpha);
  cfg.n_shifters = doc.value("n_shifters", cfg.n_shifters);
  cfg.shifter_first = doc.value("shifter_first", cfg.shifter_first);
  cfg.shifter_last = doc.value("shifter_last", cfg.shifter_last);
  cfg.tax_size = doc.value("tax_size", cfg.tax_size);
  cfg.base_seed = doc.value("base_seed", cfg.base_seed);
  return cfg;
}

std::string config_text(const SimulationConfig& cfg) {
  std::ostringstream os;
  os << cfg.n_markets << "|" << cfg.n_products << "|";
  for (int s : cfg.firm_sizes) os << s << ";";
  os << "|" << cfg.delta_mean << "|" << cfg.delta_sd << "|" << cfg.cost_low << "|"
     << cfg.cost_high << "|" << cfg.alpha << "|" << cfg.n_shifters << "|" << cfg.shifter_first
     << "|" << cfg.shifter_last << "|" << cfg.tax_size << "|" << cfg.base_seed;
  return os.str();
}

int cmd_simulate(const SimulateArgs& args) {
  SimulationConfig cfg = config_from_file(args.config_file);
  if (args.seed_set) cfg.base_seed = args.seed;

  const RunManifest mf =
      make_manifest("simulate",
                    args.config_file.empty() ? std::vector<std::string>{}
                                             : std::vector<std::string>{args.config_file},
                    cfg.base_seed, config_text(cfg));

  const SimulationResult res = run_simulation(cfg, args.threads);

  const fs::path out = fs::path(args.out_dir);
  fs::create_directories(out);
  write_matrix_csv((out / "matrix_error.csv").string(), res, mf);
  write_price_csv((out / "price_response.csv").string(), res, mf);

  json summary;
  summary["manifest"] = manifest_json(mf);
  summary["n_markets"] = cfg.n_markets;
  summary["n_shifters"] = cfg.n_shifters;
  summary["matrix_rows"] = res.matrix_rows.size();
  summary["price_rows"] = res.price_rows.size();
  summary["failures"] = res.n_failures;
  summary["failed_cells"] = res.failed_cells;
  write_json(out / "simulate_summary.json", summary);

  if (res.n_failures > 0)
    std::cerr << "passmat: " << res.n_failures
              << " cells failed to converge and were excluded from the CSVs\n";
  std::cout << (out / "matrix_error.csv").string() << "\n"
            << (out / "price_response.csv").string() << "\n";
  return kExitOk;
}

struct SmallShareArgs {
  std::string market_file;
  std::string out_dir = ".";
  double lambda_max = 1e4;
  int product = 0;
  std::uint64_t seed = 0;
};

const char* tail_name(TailClass c) {
  switch (c) {
    case TailClass::Thin: return "thin";
    case TailClass::Fat: return "fat";
    default: return "finite_choke";
  }
}

int cmd_smallshare(const SmallShareArgs& args) {
  const Market m = load_market(args.market_file);
  const RunManifest mf =
      make_manifest("smallshare", {args.market_file}, args.seed, market_to_json(m).dump());
  const int J = m.n_products;

  RaySequence seq;
  LimitContext ctx;
  const Vector base = Vector::Constant(J, 1.0);
  if (const auto* lin = std::get_if<Linear>(&m.demand)) {
    // start safely inside the domain, then approach the choke boundary
    Vector start = base;
    for (int tries = 0; tries < 60; ++tries) {
      try {
        eval_demand(m.demand, start);
        break;
      } catch (const OutOfDomain&) {
        start *= 0.5;
      }
    }
    seq = linear_boundary_sequence(*lin, args.product, start, 8);
  } else if (const auto* aids = std::get_if<Aids>(&m.demand)) {
    seq = aids_boundary_sequence(*aids, args.product, base, 6);
    Matrix cbar(J, J);
    for (int j = 0; j < J; ++j)
      for (int k = 0; k < J; ++k) cbar(j, k) = base[j] / base[k];
    ctx.cbar = cbar;
  } else {
    double lambda_max = args.lambda_max;
    if (const auto* ml = std::get_if<MixedLogit>(&m.demand);
        ml && std::holds_alternative<LogNormalMixing>(ml->mixing))
      lambda_max = std::min(lambda_max, 1e3);  // quadrature underflow beyond
    seq = make_ray_sequence(base, default_ray_lambdas(lambda_max));
    ctx.base_p = base;
  }

  const TailCoefficients est = estimate_tail_coefficients(m.demand, seq);

  json rep;
  rep["manifest"] = manifest_json(mf);
  rep["kind"] = seq.kind == RaySequence::Kind::Ray ? "ray" : "boundary";
  rep["estimated"] = {{"a", vector_to_json(est.a)},
                      {"b", matrix_to_json(est.b)},
                      {"rho", matrix_to_json(est.rho)},
                      {"a_convergence", vector_to_json(est.a_convergence)}};
  json classes = json::array();
  for (TailClass c : est.tail_class) classes.push_back(tail_name(c));
  rep["tail_class"] = classes;

  try {
    const TailCoefficients th = theoretical_limit(m.demand, ctx);
    rep["theoretical"] = {{"a", vector_to_json(th.a)}, {"b", matrix_to_json(th.b)}};
  } catch (const UnsupportedDemand&) {
    rep["theoretical"] = nullptr;  // no closed-form row for this family
  }

  const fs::path out = fs::path(args.out_dir);
  fs::create_directories(out);
  write_json(out / "smallshare_report.json", rep);
  std::cout << (out / "smallshare_report.json").string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"equilibrium cost pass-through in multiproduct oligopoly"};
  app.require_subcommand(1);

  AnalyzeArgs an;
  CLI::App* analyze = app.add_subcommand("analyze", "solve a market and report pass-through");
  analyze->add_option("market", an.market_file, "market JSON file")->required();
  analyze->add_flag("--passthrough,!--no-passthrough", an.passthrough, "exact pass-through matrix");
  analyze->add_option("--neumann", an.neumann, "comma list of truncation orders");
  analyze->add_flag("--decompose", an.decompose, "report the -2I + K + C decomposition");
  analyze->add_flag("--smallshare", an.smallshare, "thin-tail diagonal benchmark");
  analyze->add_option("--welfare", an.welfare, "uniform proportional cost shock d tau");
  analyze->add_option("--out", an.out_dir, "output directory");
  analyze->add_option("--tol", an.tol, "solver tolerance on ||f||_inf");
  analyze->add_option("--format", an.format, "json|csv")->check(CLI::IsMember({"json", "csv"}));
  analyze->add_option("--seed", an.seed, "seed recorded in the manifest");

  MergerArgs mg;
  CLI::App* merger = app.add_subcommand("merger", "first-order merger analysis with re-solve truth");
  merger->add_option("market", mg.market_file, "market JSON file")->required();
  merger->add_option("scenario", mg.scenario_file, "scenario JSON file")->required();
  merger->add_option("--out", mg.out_dir, "output directory");
  merger->add_option("--tol", mg.tol, "solver tolerance");
  merger->add_option("--format", mg.format, "json|csv")->check(CLI::IsMember({"json", "csv"}));
  merger->add_option("--seed", mg.seed, "seed recorded in the manifest");

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand("simulate", "market sweep with CSV outputs");
  simulate->add_option("config", sim.config_file, "config JSON file (defaults when omitted)");
  CLI::Option* seed_opt = simulate->add_option("--seed", sim.seed, "base seed");
  simulate->add_option("--out", sim.out_dir, "output directory");
  simulate->add_option("--threads", sim.threads, "worker threads (0 = auto, capped by PASSMAT_THREADS)");

  SmallShareArgs ss;
  CLI::App* smallshare = app.add_subcommand("smallshare", "tail-coefficient estimation");
  smallshare->add_option("market", ss.market_file, "market JSON file")->required();
  smallshare->add_option("--lambda-max", ss.lambda_max, "largest ray scale factor");
  smallshare->add_option("--product", ss.product, "boundary product (linear/aids)");
  smallshare->add_option("--out", ss.out_dir, "output directory");
  smallshare->add_option("--seed", ss.seed, "seed recorded in the manifest");

  CLI11_PARSE(app, argc, argv);
  sim.seed_set = seed_opt->count() > 0;

  try {
    if (*analyze) return cmd_analyze(an);
    if (*merger) return cmd_merger(mg);
    if (*simulate) return cmd_simulate(sim);
    if (*smallshare) return cmd_smallshare(ss);
  } catch (const InputError& e) {
    std::cerr << "passmat: input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const InvalidPartition& e) {
    std::cerr << "passmat: input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const InvalidDemandSpec& e) {
    std::cerr << "passmat: input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NoConvergence& e) {
    std::cerr << "passmat: no convergence: " << e.what() << "\n";
    return kExitNoConvergence;
  } catch (const DomainExhausted& e) {
    std::cerr << "passmat: no convergence: " << e.what() << "\n";
    return kExitNoConvergence;
  } catch (const Error& e) {
    std::cerr << "passmat: error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}
