#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "evade/corpus.hpp"
#include "evade/gateway.hpp"
#include "evade/label.hpp"
#include "evade/tagger.hpp"
#include "evade/validator.hpp"

namespace evade::metrics {

inline constexpr double kDefaultEpsilon = 1e-4;

// KL(reference || candidate) in nats, both sides smoothed by adding epsilon
// to every entry and renormalizing.
double kld(const LabelDistribution& reference, const LabelDistribution& candidate,
           double epsilon = kDefaultEpsilon);
// Raw-array form; throws DataError when either side is not normalized.
double kld(const std::array<double, 3>& reference,
           const std::array<double, 3>& candidate,
           double epsilon = kDefaultEpsilon);

// Uniform over the given labels; nullopt for the empty set.
std::optional<LabelDistribution> distribution_from_labels(const LabelSet& labels);

struct PrecisionRecall {
  std::optional<double> precision;  // null when nothing was predicted
  std::optional<double> recall;     // null when the gold side is empty
  std::size_t true_positives = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
};

// Micro-averaged over (instance, label) pairs. Ids present on one side only
// count as empty sets on the other.
PrecisionRecall precision_recall(const std::map<std::string, LabelSet>& predicted,
                                 const std::map<std::string, LabelSet>& gold);

// Ranking metrics; all throw DataError on an empty ranking. AP and R@k also
// require a non-empty gold set. P@k divides by k even when the ranking is
// shorter.
double average_precision(const std::vector<LabelKey>& ranking,
                         const std::set<LabelKey>& gold);
double precision_at_k(const std::vector<LabelKey>& ranking,
                      const std::set<LabelKey>& gold, std::size_t k);
double recall_at_k(const std::vector<LabelKey>& ranking,
                   const std::set<LabelKey>& gold, std::size_t k);

// Jaccard over sets of n-grams. When neither side has an n-gram (texts
// shorter than n), the score is 1 for identical token sequences and 0
// otherwise.
double jaccard_ngrams(const std::vector<std::string>& a,
                      const std::vector<std::string>& b, std::size_t n);
double lexical_similarity(std::string_view a, std::string_view b, std::size_t n);
double syntactic_similarity(std::string_view a, std::string_view b, std::size_t n,
                            const PosTagger& tagger);

struct SemanticScore {
  double cosine = 0.0;     // clipped to [0, 1]
  double euclidean = 0.0;  // 1 / (1 + distance)
};

// Throws DataError on a dimension mismatch, an empty vector or a zero norm.
SemanticScore semantic_similarity(std::span<const double> u,
                                  std::span<const double> v);

enum class Regime { kWithinHuman, kWithinLlm, kLlmVsHuman };

std::string_view to_string(Regime regime);
Regime parse_regime(std::string_view text);

using EmbedFn =
    std::function<std::vector<llm::Vector>(const std::vector<std::string>&)>;

struct SimilarityConfig {
  std::set<std::size_t> ngram_orders = {1, 2, 3};
  // Syntactic metrics are skipped without a tagger, semantic ones without
  // an embedding function.
  const PosTagger* tagger = nullptr;
  EmbedFn embed;
  // Restricts the model side to one model id.
  std::optional<std::string> model;
  std::size_t workers = 1;

  void validate() const;
};

struct RegimeScores {
  Regime regime = Regime::kWithinHuman;
  std::optional<std::string> model;
  // "lexical_n1", "syntactic_n3", "cosine", "euclidean", ...
  std::map<std::string, double> means;
  std::size_t items = 0;
  std::size_t labels = 0;
  std::size_t pairs = 0;

  nlohmann::ordered_json to_json() const;
};

// Pair scores averaged per label, then per item, then across items.
// Throws DataError("no pairs") when the regime has no eligible pair.
RegimeScores regime_similarity(const Corpus& corpus, Regime regime,
                               const SimilarityConfig& config);

struct GenerationStats {
  std::size_t instances = 0;
  std::size_t explanations = 0;
  double mean_words = 0.0;
  double labels_per_item = 0.0;
  double explanations_per_label = 0.0;

  nlohmann::ordered_json to_json() const;
};

GenerationStats generation_stats(const Corpus& corpus, const SourceFilter& filter);

struct ValidationStats {
  std::size_t scores = 0;
  double mean = 0.0;
  double mean_label_std = 0.0;

  nlohmann::ordered_json to_json() const;
};

// Population std within each (instance, label), averaged over the labels of
// an instance, then over instances. Throws DataError on an empty run.
ValidationStats validation_stats(const validator::ValidationRun& run);

// Support-weighted F1 of argmax labels. Throws DataError when the id sets
// differ or are empty.
double weighted_f1(const std::map<std::string, LabelDistribution>& predicted,
                   const std::map<std::string, LabelDistribution>& gold);

}  // namespace evade::metrics
