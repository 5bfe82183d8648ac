#include "evade/exporter.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "evade/error.hpp"
#include "evade/metrics.hpp"
#include "json_util.hpp"

namespace evade::exporter {

namespace {

// Rebuilds the corpus keeping explanations accepted by `keep`; instances
// that had explanations and lose them all are flagged.
template <typename Keep>
Corpus filter_explanations(const Corpus& corpus, Keep keep) {
  std::vector<Instance> out;
  out.reserve(corpus.size());
  for (const auto& inst : corpus.instances()) {
    Instance copy = inst;
    copy.explanations.clear();
    const auto refs = explanation_refs(inst);
    for (std::size_t i = 0; i < inst.explanations.size(); ++i) {
      if (keep(inst.explanations[i], refs[i])) {
        copy.explanations.push_back(inst.explanations[i]);
      }
    }
    if (!inst.explanations.empty() && copy.explanations.empty()) copy.pruned = true;
    out.push_back(std::move(copy));
  }
  return Corpus(std::move(out));
}

}  // namespace

nlohmann::ordered_json ExportManifest::to_json() const {
  nlohmann::ordered_json obj;
  obj["instances"] = instances;
  obj["exported"] = exported;
  obj["skipped_empty"] = skipped_empty;
  obj["skipped_unvalidated"] = skipped_unvalidated;
  return obj;
}

std::string soft_labels_jsonl(const Corpus& corpus,
                              const std::map<std::string, LabelSet>& validated,
                              ExportManifest* manifest) {
  ExportManifest m;
  m.instances = corpus.size();
  std::string out;
  for (const auto& inst : corpus.instances()) {
    auto it = validated.find(inst.id);
    if (it == validated.end()) {
      ++m.skipped_unvalidated;
      continue;
    }
    const auto dist = metrics::distribution_from_labels(it->second);
    if (!dist) {
      ++m.skipped_empty;
      continue;
    }
    nlohmann::ordered_json line;
    line["id"] = inst.id;
    line["premise"] = inst.premise;
    line["hypothesis"] = inst.hypothesis;
    line["dist"] = {{"e", (*dist)[Label::kEntailment]},
                    {"n", (*dist)[Label::kNeutral]},
                    {"c", (*dist)[Label::kContradiction]}};
    out += detail::dump_line(line);
    ++m.exported;
  }
  if (manifest != nullptr) *manifest = m;
  return out;
}

ExportManifest export_soft_labels(const Corpus& corpus,
                                  const std::map<std::string, LabelSet>& validated,
                                  const std::filesystem::path& path) {
  ExportManifest m;
  detail::write_text_file(path, soft_labels_jsonl(corpus, validated, &m));
  return m;
}

Corpus prune_corpus(const Corpus& corpus,
                    const std::vector<validator::ErrorVerdict>& verdicts,
                    PruneSummary* summary) {
  std::set<LabelKey> erroneous;
  for (const auto& v : verdicts) {
    if (corpus.find(v.instance_id) == nullptr) {
      throw DataError(fmt::format("prune: verdict names unknown instance '{}'",
                                  v.instance_id));
    }
    if (v.erroneous()) erroneous.insert({v.instance_id, v.label});
  }
  PruneSummary s;
  for (const auto& key : erroneous) {
    const Instance* inst = corpus.find(key.instance_id);
    const auto n = std::count_if(
        inst->explanations.begin(), inst->explanations.end(),
        [&](const Explanation& e) { return e.label == key.label; });
    // A label already gone is a no-op so pruning stays idempotent.
    if (n > 0) ++s.labels_removed;
    s.explanations_removed += static_cast<std::size_t>(n);
  }
  Corpus out = filter_explanations(corpus, [&](const Explanation& e,
                                               const ExplanationRef& ref) {
    return erroneous.count({ref.instance_id, e.label}) == 0;
  });
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.instances()[i].pruned && !corpus.instances()[i].pruned) {
      ++s.instances_emptied;
    }
  }
  if (summary != nullptr) *summary = s;
  return out;
}

Corpus apply_human_validity(const Corpus& corpus) {
  return filter_explanations(corpus, [](const Explanation& e, const ExplanationRef&) {
    return !e.source.is_human() || e.human_valid.value_or(false);
  });
}

Corpus keep_validated(const Corpus& corpus, const validator::ValidationRun& run,
                      double tau, bool strict_gt) {
  const SourceFilter targets = SourceFilter::parse(run.targets);
  return filter_explanations(corpus, [&](const Explanation& e,
                                         const ExplanationRef& ref) {
    if (!targets.matches(e)) return true;
    auto it = run.scores.find(ref);
    return it != run.scores.end() && validator::passes(it->second, tau, strict_gt);
  });
}

std::set<LabelKey> gold_errors(const Corpus& corpus) {
  std::set<LabelKey> out;
  for (const auto& inst : corpus.instances()) {
    for (Label label : kAllLabels) {
      bool judged = false;
      bool any_valid = false;
      for (const auto& e : inst.explanations) {
        if (e.label != label || !e.source.is_human() || !e.human_valid) continue;
        judged = true;
        any_valid = any_valid || *e.human_valid;
      }
      if (judged && !any_valid) out.insert({inst.id, label});
    }
  }
  return out;
}

nlohmann::ordered_json convention_header(const Conventions& c) {
  nlohmann::ordered_json h;
  h["kld_direction"] = "KL(reference || candidate)";
  h["kld_log"] = "natural";
  h["kld_epsilon"] = c.epsilon;
  h["kld_smoothing"] = "add epsilon to each label, renormalize";
  h["boundary_rule"] = c.strict_gt ? "score > tau" : "score >= tau";
  h["tau"] = c.tau ? nlohmann::ordered_json(*c.tau) : nlohmann::ordered_json(nullptr);
  h["tagger"] = c.tagger_id ? nlohmann::ordered_json(*c.tagger_id)
                            : nlohmann::ordered_json(nullptr);
  h["euclidean_similarity"] = "1 / (1 + distance)";
  h["ngram_similarity"] = "jaccard over n-gram sets";
  return h;
}

Report::Report(const Conventions& conventions) {
  doc_["conventions"] = convention_header(conventions);
}

void Report::add(const std::string& section, nlohmann::ordered_json body) {
  doc_[section] = std::move(body);
}

bool Report::has(const std::string& section) const {
  return doc_.contains(section);
}

std::string Report::dump() const { return detail::dump_pretty(doc_); }

void Report::write(const std::filesystem::path& path) const {
  detail::write_text_file(path, dump());
}

}  // namespace evade::exporter
