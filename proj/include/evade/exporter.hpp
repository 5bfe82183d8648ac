#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evade/corpus.hpp"
#include "evade/validator.hpp"

namespace evade::exporter {

struct ExportManifest {
  std::size_t instances = 0;
  std::size_t exported = 0;
  std::size_t skipped_empty = 0;
  std::size_t skipped_unvalidated = 0;  // instance absent from the label map

  nlohmann::ordered_json to_json() const;
};

// One {"id","premise","hypothesis","dist":{"e","n","c"}} line per instance
// with a non-empty validated set, in corpus order.
std::string soft_labels_jsonl(const Corpus& corpus,
                              const std::map<std::string, LabelSet>& validated,
                              ExportManifest* manifest = nullptr);
ExportManifest export_soft_labels(const Corpus& corpus,
                                  const std::map<std::string, LabelSet>& validated,
                                  const std::filesystem::path& path);

struct PruneSummary {
  std::size_t labels_removed = 0;
  std::size_t explanations_removed = 0;
  std::size_t instances_emptied = 0;
};

// Removes every erroneous (instance, label) with all of its explanations and
// flags instances left without any. Throws DataError for a verdict naming an
// unknown instance.
Corpus prune_corpus(const Corpus& corpus,
                    const std::vector<validator::ErrorVerdict>& verdicts,
                    PruneSummary* summary = nullptr);

// Keeps human records judged valid in the second round (and all model
// records); instances left empty are flagged.
Corpus apply_human_validity(const Corpus& corpus);

// Drops targeted explanations whose score fails tau, including unscored ones.
Corpus keep_validated(const Corpus& corpus, const validator::ValidationRun& run,
                      double tau, bool strict_gt = false);

// Human labels lacking any explanation judged valid in the second round.
std::set<LabelKey> gold_errors(const Corpus& corpus);

struct Conventions {
  double epsilon = 1e-4;
  bool strict_gt = false;
  std::optional<double> tau;
  std::optional<std::string> tagger_id;
};

nlohmann::ordered_json convention_header(const Conventions& c);

// Ordered sections under one convention header; no timestamps so replays
// diff cleanly.
class Report {
 public:
  explicit Report(const Conventions& conventions);

  void add(const std::string& section, nlohmann::ordered_json body);
  bool has(const std::string& section) const;
  const nlohmann::ordered_json& json() const { return doc_; }
  std::string dump() const;
  void write(const std::filesystem::path& path) const;

 private:
  nlohmann::ordered_json doc_;
};

}  // namespace evade::exporter
