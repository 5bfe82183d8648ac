#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "evade/filter.hpp"
#include "evade/gateway.hpp"
#include "evade/generator.hpp"
#include "evade/metrics.hpp"
#include "evade/validator.hpp"

namespace evade {

struct GenerationSection {
  std::vector<std::string> models;
  std::array<std::string, 3> relationship_phrases = {
      "true", "neither true nor false", "false"};
  llm::Decoding decoding;
};

struct ValidationSection {
  std::vector<std::string> validators;
  std::vector<validator::Scenario> scenarios = {
      validator::Scenario::kOneExpl, validator::Scenario::kOneLlm,
      validator::Scenario::kAllLlm};
  // SourceFilter spelling; empty means model:<validator>.
  std::string targets;
  int parse_retries = 2;
  llm::Decoding decoding{0.0, 256, std::nullopt};
};

struct CalibrationSection {
  std::vector<double> grid;  // empty means 0.1 .. 0.9
  double kld_slack = 0.02;
  double epsilon = metrics::kDefaultEpsilon;
  bool strict_gt = false;
  std::string gold = "human-valid";  // SourceFilter for gold label sets
  std::optional<double> tau;         // fixed threshold instead of selection
};

struct MetricsSection {
  std::set<std::size_t> ngram_orders = {1, 2, 3};
  std::string tagger = "rules";  // "rules", "none", or a tags JSONL path
  std::string embeddings = "none";  // "none", "gateway", or a vectors JSONL
  std::size_t top_k = 100;
};

// Human-explanation validation used to prune the corpus.
struct PruneSection {
  std::string validator;
  validator::Scenario scenario = validator::Scenario::kOneExpl;
  std::optional<double> tau;  // defaults to the calibrated one, else 0.5
};

struct BackendSection {
  std::string base_url;  // empty: EVADE_BASE_URL or the client default
  std::string embedding_model = "text-embedding-3-small";
  int retries = 3;
};

struct Config {
  std::filesystem::path corpus;
  std::filesystem::path reference;
  std::filesystem::path out_dir = "out";
  std::size_t workers = 8;
  std::int64_t seed = 0;

  GenerationSection generation;
  filter::FilterConfig filter;
  ValidationSection validation;
  CalibrationSection calibration;
  MetricsSection metrics;
  std::optional<PruneSection> prune;
  BackendSection backend;

  // Throws DataError naming the offending key.
  static Config from_json(const nlohmann::json& doc);
  static Config load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;
};

}  // namespace evade
