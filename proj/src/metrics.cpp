#include "evade/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <fmt/format.h>

#include "evade/error.hpp"
#include "evade/parallel.hpp"
#include "evade/text.hpp"
#include "json_util.hpp"

namespace evade::metrics {

namespace {

void check_normalized(const std::array<double, 3>& p, std::string_view side) {
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw DataError(fmt::format("kld: {} has a negative or non-finite entry", side));
    }
    sum += x;
  }
  if (std::abs(sum - 1.0) > LabelDistribution::kTolerance) {
    throw DataError(fmt::format("kld: {} sums to {}, not 1", side, sum));
  }
}

using NgramSet = std::set<std::vector<std::string>>;

NgramSet ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  NgramSet out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    out.emplace(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
  }
  return out;
}

std::vector<std::string> lexical_tokens(std::string_view s) {
  return text::split_whitespace(text::to_lower_ascii(s));
}

std::size_t hits_in_prefix(const std::vector<LabelKey>& ranking,
                           const std::set<LabelKey>& gold, std::size_t k) {
  std::size_t hits = 0;
  const std::size_t end = std::min(k, ranking.size());
  for (std::size_t i = 0; i < end; ++i) hits += gold.count(ranking[i]);
  return hits;
}

void require_ranking(const std::vector<LabelKey>& ranking) {
  if (ranking.empty()) throw DataError("ranking metrics: empty ranking");
}

double mean(const std::vector<double>& xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

// Per distinct text: everything pair scoring needs, computed once.
struct TextFeatures {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
  llm::Vector vector;
};

struct PairSums {
  std::map<std::string, double> sums;
  std::size_t pairs = 0;
};

}  // namespace

double kld(const std::array<double, 3>& reference,
           const std::array<double, 3>& candidate, double epsilon) {
  if (!(epsilon > 0.0)) throw DataError("kld: epsilon must be positive");
  check_normalized(reference, "reference");
  check_normalized(candidate, "candidate");
  double sum_p = 0.0;
  double sum_q = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    sum_p += reference[i] + epsilon;
    sum_q += candidate[i] + epsilon;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double p = (reference[i] + epsilon) / sum_p;
    const double q = (candidate[i] + epsilon) / sum_q;
    total += p * std::log(p / q);
  }
  return std::max(total, 0.0);
}

double kld(const LabelDistribution& reference, const LabelDistribution& candidate,
           double epsilon) {
  return kld(reference.values(), candidate.values(), epsilon);
}

std::optional<LabelDistribution> distribution_from_labels(const LabelSet& labels) {
  if (labels.empty()) return std::nullopt;
  std::array<double, 3> p = {0.0, 0.0, 0.0};
  const double w = 1.0 / static_cast<double>(labels.size());
  for (Label l : labels) p[index_of(l)] = w;
  return LabelDistribution(p);
}

PrecisionRecall precision_recall(const std::map<std::string, LabelSet>& predicted,
                                 const std::map<std::string, LabelSet>& gold) {
  PrecisionRecall pr;
  for (const auto& [id, labels] : predicted) {
    pr.predicted += labels.size();
    auto it = gold.find(id);
    if (it == gold.end()) continue;
    for (Label l : labels) pr.true_positives += it->second.count(l);
  }
  for (const auto& [id, labels] : gold) pr.gold += labels.size();
  const auto tp = static_cast<double>(pr.true_positives);
  if (pr.predicted > 0) pr.precision = tp / static_cast<double>(pr.predicted);
  if (pr.gold > 0) pr.recall = tp / static_cast<double>(pr.gold);
  return pr;
}

double average_precision(const std::vector<LabelKey>& ranking,
                         const std::set<LabelKey>& gold) {
  require_ranking(ranking);
  if (gold.empty()) throw DataError("average_precision: empty gold set");
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (gold.count(ranking[i]) == 0) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  // Gold positives never ranked contribute precision 0.
  return sum / static_cast<double>(gold.size());
}

double precision_at_k(const std::vector<LabelKey>& ranking,
                      const std::set<LabelKey>& gold, std::size_t k) {
  require_ranking(ranking);
  if (k == 0) throw DataError("precision_at_k: k must be positive");
  return static_cast<double>(hits_in_prefix(ranking, gold, k)) /
         static_cast<double>(k);
}

double recall_at_k(const std::vector<LabelKey>& ranking,
                   const std::set<LabelKey>& gold, std::size_t k) {
  require_ranking(ranking);
  if (gold.empty()) throw DataError("recall_at_k: empty gold set");
  return static_cast<double>(hits_in_prefix(ranking, gold, k)) /
         static_cast<double>(gold.size());
}

double jaccard_ngrams(const std::vector<std::string>& a,
                      const std::vector<std::string>& b, std::size_t n) {
  if (n == 0) throw DataError("n-gram order must be at least 1");
  const NgramSet sa = ngrams(a, n);
  const NgramSet sb = ngrams(b, n);
  if (sa.empty() && sb.empty()) return a == b ? 1.0 : 0.0;
  std::size_t common = 0;
  for (const auto& g : sa) common += sb.count(g);
  const std::size_t uni = sa.size() + sb.size() - common;
  return static_cast<double>(common) / static_cast<double>(uni);
}

double lexical_similarity(std::string_view a, std::string_view b, std::size_t n) {
  return jaccard_ngrams(lexical_tokens(a), lexical_tokens(b), n);
}

double syntactic_similarity(std::string_view a, std::string_view b, std::size_t n,
                            const PosTagger& tagger) {
  return jaccard_ngrams(tagger.tag(a), tagger.tag(b), n);
}

SemanticScore semantic_similarity(std::span<const double> u,
                                  std::span<const double> v) {
  if (u.size() != v.size()) {
    throw DataError(fmt::format("semantic_similarity: dimensions {} and {} differ",
                                u.size(), v.size()));
  }
  if (u.empty()) throw DataError("semantic_similarity: empty vectors");
  double dot = 0.0;
  double nu = 0.0;
  double nv = 0.0;
  double dist2 = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
    const double d = u[i] - v[i];
    dist2 += d * d;
  }
  if (nu == 0.0 || nv == 0.0) {
    throw DataError("semantic_similarity: zero vector has no cosine");
  }
  SemanticScore s;
  s.cosine = std::clamp(dot / std::sqrt(nu * nv), 0.0, 1.0);
  s.euclidean = 1.0 / (1.0 + std::sqrt(dist2));
  return s;
}

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::kWithinHuman: return "within-human";
    case Regime::kWithinLlm: return "within-llm";
    case Regime::kLlmVsHuman: return "llm-vs-human";
  }
  return "?";
}

Regime parse_regime(std::string_view text) {
  const std::string t = text::to_lower_ascii(text);
  if (t == "within-human") return Regime::kWithinHuman;
  if (t == "within-llm") return Regime::kWithinLlm;
  if (t == "llm-vs-human") return Regime::kLlmVsHuman;
  throw DataError(fmt::format(
      "unknown regime '{}' (expected within-human, within-llm, llm-vs-human)", text));
}

void SimilarityConfig::validate() const {
  if (ngram_orders.empty()) throw DataError("similarity: no n-gram orders");
  if (*ngram_orders.begin() < 1) throw DataError("similarity: n-gram order 0");
}

nlohmann::ordered_json RegimeScores::to_json() const {
  nlohmann::ordered_json obj;
  obj["regime"] = std::string(to_string(regime));
  if (model) obj["model"] = *model;
  obj["items"] = items;
  obj["labels"] = labels;
  obj["pairs"] = pairs;
  obj["means"] = nlohmann::ordered_json::object();
  for (const auto& [name, value] : means) obj["means"][name] = value;
  return obj;
}

RegimeScores regime_similarity(const Corpus& corpus, Regime regime,
                               const SimilarityConfig& config) {
  config.validate();
  auto model_ok = [&](const Explanation& e) {
    return e.source.is_model() && (!config.model || e.source.id == *config.model);
  };
  auto eligible = [&](const Explanation& e) {
    return regime == Regime::kWithinHuman ? e.source.is_human()
           : regime == Regime::kWithinLlm ? model_ok(e)
                                          : (e.source.is_human() || model_ok(e));
  };

  // Features per distinct text, in first-seen order so tagger and embedding
  // calls are deterministic.
  std::vector<std::string> texts;
  std::unordered_map<std::string, std::size_t> text_index;
  for (const auto& inst : corpus.instances()) {
    for (const auto& e : inst.explanations) {
      if (eligible(e) && text_index.emplace(e.text, texts.size()).second) {
        texts.push_back(e.text);
      }
    }
  }
  std::vector<TextFeatures> features(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    features[i].tokens = lexical_tokens(texts[i]);
    if (config.tagger != nullptr) features[i].tags = config.tagger->tag(texts[i]);
  }
  if (config.embed && !texts.empty()) {
    auto vectors = config.embed(texts);
    if (vectors.size() != texts.size()) {
      throw DataError("similarity: embedding count does not match text count");
    }
    for (std::size_t i = 0; i < texts.size(); ++i) {
      features[i].vector = std::move(vectors[i]);
    }
  }

  auto score_pair = [&](std::size_t a, std::size_t b, PairSums& acc) {
    const TextFeatures& fa = features[a];
    const TextFeatures& fb = features[b];
    for (std::size_t n : config.ngram_orders) {
      acc.sums[fmt::format("lexical_n{}", n)] += jaccard_ngrams(fa.tokens, fb.tokens, n);
      if (config.tagger != nullptr) {
        acc.sums[fmt::format("syntactic_n{}", n)] += jaccard_ngrams(fa.tags, fb.tags, n);
      }
    }
    if (config.embed) {
      const SemanticScore s = semantic_similarity(fa.vector, fb.vector);
      acc.sums["cosine"] += s.cosine;
      acc.sums["euclidean"] += s.euclidean;
    }
    ++acc.pairs;
  };

  struct ItemResult {
    std::map<std::string, double> means;  // averaged over labels
    std::size_t labels = 0;
    std::size_t pairs = 0;
  };
  const auto& instances = corpus.instances();
  std::vector<ItemResult> items(instances.size());

  parallel_for(instances.size(), config.workers, [&](std::size_t idx) {
    const Instance& inst = instances[idx];
    ItemResult& item = items[idx];
    std::map<std::string, double> label_sum;
    for (Label label : kAllLabels) {
      std::vector<std::size_t> humans;
      std::map<std::string, std::vector<std::size_t>> by_model;
      for (const auto& e : inst.explanations) {
        if (e.label != label || !eligible(e)) continue;
        const std::size_t t = text_index.at(e.text);
        if (e.source.is_human()) {
          humans.push_back(t);
        } else {
          by_model[e.source.id].push_back(t);
        }
      }
      PairSums acc;
      if (regime == Regime::kWithinHuman) {
        for (std::size_t i = 0; i < humans.size(); ++i) {
          for (std::size_t j = i + 1; j < humans.size(); ++j) {
            score_pair(humans[i], humans[j], acc);
          }
        }
      } else if (regime == Regime::kWithinLlm) {
        for (const auto& [model, group] : by_model) {
          for (std::size_t i = 0; i < group.size(); ++i) {
            for (std::size_t j = i + 1; j < group.size(); ++j) {
              score_pair(group[i], group[j], acc);
            }
          }
        }
      } else {
        for (const auto& [model, group] : by_model) {
          for (std::size_t m : group) {
            for (std::size_t h : humans) score_pair(m, h, acc);
          }
        }
      }
      if (acc.pairs == 0) continue;
      ++item.labels;
      item.pairs += acc.pairs;
      for (const auto& [name, sum] : acc.sums) {
        label_sum[name] += sum / static_cast<double>(acc.pairs);
      }
    }
    for (const auto& [name, sum] : label_sum) {
      item.means[name] = sum / static_cast<double>(item.labels);
    }
  });

  RegimeScores out;
  out.regime = regime;
  out.model = config.model;
  std::map<std::string, double> totals;
  for (const auto& item : items) {
    if (item.labels == 0) continue;
    ++out.items;
    out.labels += item.labels;
    out.pairs += item.pairs;
    for (const auto& [name, m] : item.means) totals[name] += m;
  }
  if (out.pairs == 0) {
    throw DataError(fmt::format("{}: no pairs", to_string(regime)));
  }
  for (const auto& [name, total] : totals) {
    out.means[name] = total / static_cast<double>(out.items);
  }
  return out;
}

nlohmann::ordered_json GenerationStats::to_json() const {
  nlohmann::ordered_json obj;
  obj["instances"] = instances;
  obj["explanations"] = explanations;
  obj["mean_words"] = mean_words;
  obj["labels_per_item"] = labels_per_item;
  obj["explanations_per_label"] = explanations_per_label;
  return obj;
}

GenerationStats generation_stats(const Corpus& corpus, const SourceFilter& filter) {
  GenerationStats s;
  s.instances = corpus.size();
  std::size_t words = 0;
  std::size_t explained = 0;
  for (const auto& inst : corpus.instances()) {
    for (const auto& e : inst.explanations) {
      if (!filter.matches(e)) continue;
      ++s.explanations;
      words += text::split_whitespace(e.text).size();
    }
    explained += explained_labels(inst, filter).size();
  }
  if (s.explanations > 0) {
    s.mean_words = static_cast<double>(words) / static_cast<double>(s.explanations);
  }
  if (s.instances > 0) {
    s.labels_per_item =
        static_cast<double>(explained) / static_cast<double>(s.instances);
  }
  if (explained > 0) {
    s.explanations_per_label =
        static_cast<double>(s.explanations) / static_cast<double>(explained);
  }
  return s;
}

nlohmann::ordered_json ValidationStats::to_json() const {
  nlohmann::ordered_json obj;
  obj["scores"] = scores;
  obj["mean"] = mean;
  obj["mean_label_std"] = mean_label_std;
  obj["std_convention"] =
      "population std per (instance, label), mean over labels, then instances";
  return obj;
}

ValidationStats validation_stats(const validator::ValidationRun& run) {
  if (run.scores.empty()) throw DataError("validation_stats: run has no scores");
  ValidationStats s;
  s.scores = run.scores.size();
  std::map<std::string, std::map<Label, std::vector<double>>> grouped;
  double total = 0.0;
  for (const auto& [ref, score] : run.scores) {
    total += score;
    grouped[ref.instance_id][ref.label].push_back(score);
  }
  s.mean = total / static_cast<double>(s.scores);
  double instance_sum = 0.0;
  for (const auto& [id, labels] : grouped) {
    double label_sum = 0.0;
    for (const auto& [label, xs] : labels) {
      const double m = mean(xs);
      double var = 0.0;
      for (double x : xs) var += (x - m) * (x - m);
      label_sum += std::sqrt(var / static_cast<double>(xs.size()));
    }
    instance_sum += label_sum / static_cast<double>(labels.size());
  }
  s.mean_label_std = instance_sum / static_cast<double>(grouped.size());
  return s;
}

double weighted_f1(const std::map<std::string, LabelDistribution>& predicted,
                   const std::map<std::string, LabelDistribution>& gold) {
  if (gold.empty()) throw DataError("weighted_f1: no instances");
  if (predicted.size() != gold.size()) {
    throw DataError(fmt::format("weighted_f1: {} predictions for {} gold instances",
                                predicted.size(), gold.size()));
  }
  std::array<std::array<std::size_t, 3>, 3> confusion{};  // [gold][pred]
  for (const auto& [id, g] : gold) {
    auto it = predicted.find(id);
    if (it == predicted.end()) {
      throw DataError(fmt::format("weighted_f1: no prediction for '{}'", id));
    }
    ++confusion[index_of(g.argmax())][index_of(it->second.argmax())];
  }
  double weighted = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    std::size_t support = 0;
    std::size_t predicted_c = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      support += confusion[c][k];
      predicted_c += confusion[k][c];
    }
    const std::size_t tp = confusion[c][c];
    const std::size_t denom = support + predicted_c;
    const double f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) /
                                             static_cast<double>(denom);
    weighted += static_cast<double>(support) * f1;
  }
  return weighted / static_cast<double>(gold.size());
}

}  // namespace evade::metrics
