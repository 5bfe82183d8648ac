#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "evade/corpus.hpp"
#include "evade/gateway.hpp"

namespace evade::validator {

// one-expl: each explanation alone. one-llm: all explanations from the same
// source for an instance in one request. all-llm: every source of the same
// kind (all models, or all annotators) for an instance in one request.
enum class Scenario { kOneExpl, kOneLlm, kAllLlm };

inline constexpr Scenario kAllScenarios[] = {
    Scenario::kOneExpl, Scenario::kOneLlm, Scenario::kAllLlm};

std::string_view to_string(Scenario scenario);
Scenario parse_scenario(std::string_view text);

struct ContextItem {
  Label label = Label::kEntailment;
  std::string text;
};

struct PromptOptions {
  std::string model_id;
  llm::Decoding decoding;
  std::string tag;
};

extern const std::string_view kOneExplTemplate;
extern const std::string_view kBatchHeader;

// OneExpl needs exactly one item; batched scenarios need at least one.
// Throws DataError otherwise.
llm::ChatRequest build_validation_prompt(Scenario scenario,
                                         const Instance& instance,
                                         const std::vector<ContextItem>& items,
                                         const PromptOptions& options);

// First number in the reply, which must lie in [0, 1]. Throws ParseError
// when there is no number or it is out of range (never clamped).
double parse_one_expl_score(std::string_view text);

struct BatchScores {
  std::map<std::size_t, double> scores;     // 1-based index -> score
  std::vector<std::size_t> missing;         // indices 1..n without a score
  std::vector<std::size_t> out_of_range;    // present but outside [0, 1]
  std::vector<std::string> extra;           // keys outside 1..n
  bool recovered = false;  // pairs salvaged from malformed JSON
};

// Extracts the outermost {...} object and maps keys "1".."n". Malformed
// JSON falls back to salvaging complete "k": v pairs. Throws ParseError when
// no object (or no salvageable pair) is present.
BatchScores parse_batch_scores(std::string_view text, std::size_t n);

struct ValidationRun {
  std::string validator_model;
  Scenario scenario = Scenario::kOneExpl;
  std::string targets;  // SourceFilter spelling
  std::map<ExplanationRef, double> scores;
  std::set<ExplanationRef> missing;
  std::size_t requests = 0;

  std::size_t targeted() const { return scores.size() + missing.size(); }

  nlohmann::ordered_json to_json() const;
  static ValidationRun from_json(const nlohmann::json& obj);
  void save(const std::filesystem::path& path) const;
  static ValidationRun load(const std::filesystem::path& path);
};

struct ValidateOptions {
  std::string validator_model;
  Scenario scenario = Scenario::kOneExpl;
  // Which explanations get scored; defaults to model:<validator_model>.
  std::optional<SourceFilter> targets;
  llm::Decoding decoding;
  int parse_retries = 2;
  std::size_t workers = 8;
};

struct ValidationResult {
  ValidationRun run;
  Corpus corpus;  // input with scores attached under the scenario key
  llm::GatewayStats cache;
};

ValidationResult validate_corpus(const Corpus& corpus,
                                 const ValidateOptions& options,
                                 llm::Gateway& gateway);

enum class VerdictStatus { kValid, kErroneous, kUndetermined };

std::string_view to_string(VerdictStatus status);

struct ErrorVerdict {
  std::string instance_id;
  Label label = Label::kEntailment;
  std::optional<double> mean_score;
  std::optional<double> max_score;
  std::size_t scored = 0;
  std::size_t missing = 0;
  VerdictStatus status = VerdictStatus::kUndetermined;
  double threshold = 0.0;

  bool erroneous() const { return status == VerdictStatus::kErroneous; }
};

// A score validates when score >= tau, or score > tau with strict_gt.
inline bool passes(double score, double tau, bool strict_gt) {
  return strict_gt ? score > tau : score >= tau;
}

// One verdict per (instance, label) with a targeted explanation, ordered by
// LabelKey. Labels whose explanations are all missing are undetermined.
std::vector<ErrorVerdict> detect_errors(const ValidationRun& run, double tau,
                                        bool strict_gt = false);

nlohmann::ordered_json verdicts_to_json(const std::vector<ErrorVerdict>& v,
                                        double tau, bool strict_gt);
std::vector<ErrorVerdict> verdicts_from_json(const nlohmann::json& obj);

// Scored labels ascending by mean score, ties by LabelKey.
std::vector<LabelKey> error_ranking(const ValidationRun& run);

// Every instance in the run, mapped to its labels having at least one
// passing explanation (possibly none).
std::map<std::string, LabelSet> validated_labels(const ValidationRun& run,
                                                 double tau,
                                                 bool strict_gt = false);

}  // namespace evade::validator
