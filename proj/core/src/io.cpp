#include "passmat/io.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

namespace passmat {

using nlohmann::json;

namespace {

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

Vector vector_from_json(const json& arr, const std::string& field) {
  if (!arr.is_array()) throw InputError("field '" + field + "': expected an array of numbers");
  Vector v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) throw InputError("field '" + field + "': entry " + std::to_string(i) + " is not a number");
    v[static_cast<int>(i)] = arr[i].get<double>();
  }
  return v;
}

Matrix matrix_from_json(const json& arr, const std::string& field) {
  if (!arr.is_array() || arr.empty())
    throw InputError("field '" + field + "': expected an array of rows");
  const std::size_t cols = arr[0].size();
  Matrix m(arr.size(), cols);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_array() || arr[i].size() != cols)
      throw InputError("field '" + field + "': row " + std::to_string(i) + " has wrong length");
    for (std::size_t j = 0; j < cols; ++j) m(static_cast<int>(i), static_cast<int>(j)) = arr[i][j].get<double>();
  }
  return m;
}

std::vector<std::vector<int>> partition_from_json(const json& arr, const std::string& field) {
  if (!arr.is_array()) throw InputError("field '" + field + "': expected an array of firms");
  std::vector<std::vector<int>> firms;
  for (std::size_t f = 0; f < arr.size(); ++f) {
    if (!arr[f].is_array())
      throw InputError("field '" + field + "': firm " + std::to_string(f) + " is not an array");
    std::vector<int> members;
    for (const auto& v : arr[f]) {
      if (!v.is_number_integer())
        throw InputError("field '" + field + "': firm " + std::to_string(f) +
                         " contains a non-integer product index");
      members.push_back(v.get<int>());
    }
    firms.push_back(std::move(members));
  }
  return firms;
}

const json& require(const json& doc, const std::string& field) {
  if (!doc.contains(field)) throw InputError("missing field '" + field + "'");
  return doc.at(field);
}

DemandSpec demand_from_json(const json& doc) {
  const std::string family = require(doc, "family").get<std::string>();
  const json& par = require(doc, "params");
  if (family == "logit") {
    Logit d;
    d.alpha = require(par, "alpha").get<double>();
    d.delta = vector_from_json(require(par, "delta"), "demand.params.delta");
    d.scale_M = require(par, "scale_M").get<double>();
    return d;
  }
  if (family == "nested_logit") {
    NestedLogit d;
    d.alpha = require(par, "alpha").get<double>();
    d.sigma_nest = require(par, "sigma_nest").get<double>();
    d.delta = vector_from_json(require(par, "delta"), "demand.params.delta");
    d.scale_M = require(par, "scale_M").get<double>();
    for (const auto& v : require(par, "nest_of")) d.nest_of.push_back(v.get<int>());
    return d;
  }
  if (family == "ces") {
    Ces d;
    d.sigma_ces = require(par, "sigma_ces").get<double>();
    d.delta = vector_from_json(require(par, "delta"), "demand.params.delta");
    d.budget_B = require(par, "budget_B").get<double>();
    return d;
  }
  if (family == "mixed_logit") {
    MixedLogit d;
    d.delta = vector_from_json(require(par, "delta"), "demand.params.delta");
    d.scale_M = require(par, "scale_M").get<double>();
    d.quad_nodes = par.value("quad_nodes", 64);
    const json& mix = require(par, "mixing");
    const std::string type = require(mix, "type").get<std::string>();
    if (type == "lognormal") {
      LogNormalMixing ln;
      ln.mu = require(mix, "mu").get<double>();
      ln.sigma_ln = require(mix, "sigma_ln").get<double>();
      d.mixing = ln;
    } else if (type == "gamma") {
      GammaMixing g;
      g.shape_r = require(mix, "shape_r").get<double>();
      g.rate_beta = require(mix, "rate_beta").get<double>();
      d.mixing = g;
    } else {
      throw InputError("field 'demand.params.mixing.type': unknown mixing '" + type + "'");
    }
    return d;
  }
  if (family == "linear") {
    Linear d;
    d.gamma_vec = vector_from_json(require(par, "gamma_vec"), "demand.params.gamma_vec");
    d.beta_mat = matrix_from_json(require(par, "beta_mat"), "demand.params.beta_mat");
    return d;
  }
  if (family == "aids") {
    Aids d;
    d.alpha_vec = vector_from_json(require(par, "alpha_vec"), "demand.params.alpha_vec");
    d.gamma_mat = matrix_from_json(require(par, "gamma_mat"), "demand.params.gamma_mat");
    d.beta_vec = vector_from_json(require(par, "beta_vec"), "demand.params.beta_vec");
    d.stone_weights = vector_from_json(require(par, "stone_weights"), "demand.params.stone_weights");
    d.budget_B = require(par, "budget_B").get<double>();
    return d;
  }
  throw InputError("field 'demand.family': unknown family '" + family + "'");
}

json demand_to_json(const DemandSpec& spec) {
  json out;
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        json par;
        if constexpr (std::is_same_v<T, Logit>) {
          out["family"] = "logit";
          par["alpha"] = d.alpha;
          par["delta"] = vector_to_json(d.delta);
          par["scale_M"] = d.scale_M;
        } else if constexpr (std::is_same_v<T, NestedLogit>) {
          out["family"] = "nested_logit";
          par["alpha"] = d.alpha;
          par["sigma_nest"] = d.sigma_nest;
          par["nest_of"] = d.nest_of;
          par["delta"] = vector_to_json(d.delta);
          par["scale_M"] = d.scale_M;
        } else if constexpr (std::is_same_v<T, Ces>) {
          out["family"] = "ces";
          par["sigma_ces"] = d.sigma_ces;
          par["delta"] = vector_to_json(d.delta);
          par["budget_B"] = d.budget_B;
        } else if constexpr (std::is_same_v<T, MixedLogit>) {
          out["family"] = "mixed_logit";
          if (const auto* ln = std::get_if<LogNormalMixing>(&d.mixing))
            par["mixing"] = {{"type", "lognormal"}, {"mu", ln->mu}, {"sigma_ln", ln->sigma_ln}};
          else {
            const auto& g = std::get<GammaMixing>(d.mixing);
            par["mixing"] = {{"type", "gamma"}, {"shape_r", g.shape_r}, {"rate_beta", g.rate_beta}};
          }
          par["delta"] = vector_to_json(d.delta);
          par["scale_M"] = d.scale_M;
          par["quad_nodes"] = d.quad_nodes;
        } else if constexpr (std::is_same_v<T, Linear>) {
          out["family"] = "linear";
          par["gamma_vec"] = vector_to_json(d.gamma_vec);
          par["beta_mat"] = matrix_to_json(d.beta_mat);
        } else if constexpr (std::is_same_v<T, Aids>) {
          out["family"] = "aids";
          par["alpha_vec"] = vector_to_json(d.alpha_vec);
          par["gamma_mat"] = matrix_to_json(d.gamma_mat);
          par["beta_vec"] = vector_to_json(d.beta_vec);
          par["stone_weights"] = vector_to_json(d.stone_weights);
          par["budget_B"] = d.budget_B;
        }
        out["params"] = std::move(par);
      },
      spec);
  return out;
}

}  // namespace

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

RunManifest make_manifest(const std::string& command, const std::vector<std::string>& inputs,
                          std::uint64_t seed, const std::string& config_text) {
  RunManifest mf;
  mf.command = command;
  mf.inputs = inputs;
  mf.seed = seed;
  mf.config_hash = fnv1a_hex(config_text);
  mf.version = PASSMAT_VERSION;
  mf.timestamp = iso_now();
  return mf;
}

std::string manifest_line(const RunManifest& mf) {
  std::ostringstream os;
  os << "# passmat v" << mf.version << " command=" << mf.command;
  for (const auto& in : mf.inputs) os << " input=" << in;
  os << " seed=" << mf.seed << " config=" << mf.config_hash;
  return os.str();
}

json manifest_json(const RunManifest& mf) {
  return json{{"version", mf.version},
              {"command", mf.command},
              {"inputs", mf.inputs},
              {"seed", mf.seed},
              {"config_hash", mf.config_hash}};
}

json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

json matrix_to_json(const Matrix& m) {
  json arr = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    arr.push_back(std::move(row));
  }
  return arr;
}

Market market_from_json(const json& doc) {
  const Vector costs = vector_from_json(require(doc, "costs"), "costs");
  const auto firms = partition_from_json(require(doc, "firms"), "firms");
  const DemandSpec demand = demand_from_json(require(doc, "demand"));
  const std::string label = doc.value("label", "");
  try {
    return build_market(costs, firms, demand, label);
  } catch (const InvalidPartition& e) {
    throw InputError(std::string("field 'firms': ") + e.what());
  } catch (const InvalidDemandSpec& e) {
    throw InputError(std::string("field 'demand': ") + e.what());
  } catch (const DimensionMismatch& e) {
    throw InputError(std::string("field 'costs': ") + e.what());
  }
}

Market load_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open market file '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw InputError("market file '" + path + "': " + e.what());
  }
  return market_from_json(doc);
}

json market_to_json(const Market& m) {
  json doc;
  doc["label"] = m.label;
  doc["costs"] = vector_to_json(m.cost);
  doc["firms"] = m.firms;
  doc["demand"] = demand_to_json(m.demand);
  return doc;
}

MergerScenario load_scenario(const std::string& path, const Market& m) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open scenario file '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw InputError("scenario file '" + path + "': " + e.what());
  }
  const auto pre = partition_from_json(require(doc, "pre_partition"), "pre_partition");
  const auto post = partition_from_json(require(doc, "post_partition"), "post_partition");
  if (doc.contains("market_ref")) {
    const std::string ref = doc["market_ref"].get<std::string>();
    if (!m.label.empty() && !ref.empty() && ref != m.label)
      std::cerr << "passmat: warning: scenario market_ref '" << ref
                << "' does not match market label '" << m.label << "'\n";
  }
  try {
    return make_merger_scenario(m.n_products, pre, post);
  } catch (const InvalidPartition& e) {
    throw InputError(std::string("field 'post_partition': ") + e.what());
  }
}

}  // namespace passmat
