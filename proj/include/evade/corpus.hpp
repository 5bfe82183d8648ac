#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "evade/label.hpp"

namespace evade {

// Who wrote an explanation: a human annotator or a model.
struct Source {
  enum class Kind { kHuman, kModel };

  Kind kind = Kind::kHuman;
  std::string id;

  static Source human(std::string annotator_id) {
    return {Kind::kHuman, std::move(annotator_id)};
  }
  static Source model(std::string model_id) {
    return {Kind::kModel, std::move(model_id)};
  }

  bool is_human() const { return kind == Kind::kHuman; }
  bool is_model() const { return kind == Kind::kModel; }

  // "human:<annotator>" or "model:<model id>".
  std::string to_string() const;
  static Source parse(std::string_view text);

  auto operator<=>(const Source&) const = default;
};

struct Explanation {
  Label label = Label::kEntailment;
  std::string text;
  Source source;
  // Validity score per scenario key ("one-expl", ...), each in [0, 1].
  std::map<std::string, double> scores;
  // Human second-round validity judgment.
  std::optional<bool> human_valid;
  // Generation provenance for model records: finish reason of the response
  // this item came from, and whether it was the response's final item.
  std::optional<std::string> finish_reason;
  bool last_item = false;

  bool operator==(const Explanation&) const = default;
};

struct Instance {
  std::string id;
  std::string premise;
  std::string hypothesis;
  std::vector<Explanation> explanations;
  // Set when pruning removed every label this instance had.
  bool pruned = false;

  bool operator==(const Instance&) const = default;
};

// Selects explanations by provenance.
class SourceFilter {
 public:
  enum class Kind { kAll, kHuman, kHumanValid, kAnyModel, kModel };

  SourceFilter() = default;
  static SourceFilter all() { return SourceFilter(Kind::kAll, {}); }
  static SourceFilter human() { return SourceFilter(Kind::kHuman, {}); }
  static SourceFilter human_valid() {
    return SourceFilter(Kind::kHumanValid, {});
  }
  static SourceFilter any_model() { return SourceFilter(Kind::kAnyModel, {}); }
  static SourceFilter model(std::string id) {
    return SourceFilter(Kind::kModel, std::move(id));
  }
  // "all", "human", "human-valid", "models", or "model:<id>".
  static SourceFilter parse(std::string_view text);

  bool matches(const Explanation& e) const;
  std::string to_string() const;
  Kind kind() const { return kind_; }

 private:
  SourceFilter(Kind kind, std::string model_id)
      : kind_(kind), model_id_(std::move(model_id)) {}

  Kind kind_ = Kind::kAll;
  std::string model_id_;
};

// Stable identity of one explanation: ordinal counts records of the same
// (instance, label, source) in file order.
struct ExplanationRef {
  std::string instance_id;
  Label label = Label::kEntailment;
  Source source;
  std::size_t ordinal = 0;

  auto operator<=>(const ExplanationRef&) const = default;
};

// One label of one instance; ordered by (instance id, label E < N < C).
struct LabelKey {
  std::string instance_id;
  Label label = Label::kEntailment;

  auto operator<=>(const LabelKey&) const = default;
};

// Refs for every explanation of `instance`, parallel to its explanations.
std::vector<ExplanationRef> explanation_refs(const Instance& instance);

// Labels carrying at least one explanation accepted by `filter`.
LabelSet explained_labels(const Instance& instance, const SourceFilter& filter);

// Immutable, validated collection of instances in file order.
class Corpus {
 public:
  Corpus() = default;
  // Throws DataError on duplicate ids, blank premise/hypothesis, empty
  // explanation text, or scores outside [0, 1].
  explicit Corpus(std::vector<Instance> instances);

  const std::vector<Instance>& instances() const { return instances_; }
  std::size_t size() const { return instances_.size(); }
  bool empty() const { return instances_.empty(); }
  const Instance* find(std::string_view id) const;
  std::size_t explanation_count() const;

  bool operator==(const Corpus& other) const {
    return instances_ == other.instances_;
  }

 private:
  std::vector<Instance> instances_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Reads canonical corpus JSONL, or the upstream VariErr release (JSONL or
// a single JSON array) through an adapter. Errors name the line and field.
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::istream& in, std::string_view name = "<stream>");

// Canonical JSONL; load_corpus(write_corpus(c)) == c.
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);
std::string serialize_corpus(const Corpus& corpus);

// Per-label gold sets: labels whose explanations pass `filter` for each
// instance, including instances with none.
std::map<std::string, LabelSet> label_sets(const Corpus& corpus,
                                           const SourceFilter& filter);

struct ReferenceDistribution {
  std::string instance_id;
  std::array<std::int64_t, 3> counts = {0, 0, 0};
  LabelDistribution distribution;
};

using ReferenceMap = std::map<std::string, ReferenceDistribution>;

ReferenceDistribution make_reference(std::string id,
                                     const std::array<std::int64_t, 3>& counts);

// Canonical {"id", "counts"} lines, or ChaosNLI release lines
// ({"uid", "label_counter"}).
ReferenceMap load_reference(const std::filesystem::path& path);
ReferenceMap parse_reference(std::istream& in,
                             std::string_view name = "<stream>");

}  // namespace evade
