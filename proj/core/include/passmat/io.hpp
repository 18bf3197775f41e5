#pragma once

#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "passmat/applications.hpp"
#include "passmat/market.hpp"

namespace passmat {

/// Provenance of one run. The timestamp stays in memory (and on stderr);
/// serialized outputs omit it so identical inputs give identical bytes.
struct RunManifest {
  std::string command;
  std::vector<std::string> inputs;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string version;
  std::string timestamp;
};

RunManifest make_manifest(const std::string& command, const std::vector<std::string>& inputs,
                          std::uint64_t seed, const std::string& config_text);

/// Deterministic one-line header embedded in CSV outputs.
std::string manifest_line(const RunManifest& mf);
nlohmann::json manifest_json(const RunManifest& mf);

std::string fnv1a_hex(const std::string& text);

// Market file: one JSON document {label, costs, firms, demand:{family, params}}.
// Product indices are 0-based.
Market load_market(const std::string& path);
Market market_from_json(const nlohmann::json& doc);
nlohmann::json market_to_json(const Market& m);

// Scenario file: {market_ref, pre_partition, post_partition}.
MergerScenario load_scenario(const std::string& path, const Market& m);

nlohmann::json matrix_to_json(const Matrix& m);
nlohmann::json vector_to_json(const Vector& v);

}  // namespace passmat
