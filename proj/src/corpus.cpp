#include "evade/corpus.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "evade/error.hpp"
#include "evade/text.hpp"
#include "json_util.hpp"

namespace evade {

using detail::fail_field;
using detail::json;
using detail::ordered_json;
using detail::require;
using detail::require_string;
using detail::Where;

std::string Source::to_string() const {
  return fmt::format("{}:{}", is_human() ? "human" : "model", id);
}

Source Source::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon != std::string_view::npos) {
    const std::string kind = text::to_lower_ascii(text.substr(0, colon));
    std::string id(text.substr(colon + 1));
    if (kind == "human") return human(std::move(id));
    if (kind == "model") return model(std::move(id));
  }
  throw DataError(fmt::format(
      "source '{}' is not of the form human:<id> or model:<id>", text));
}

SourceFilter SourceFilter::parse(std::string_view text) {
  if (text == "all") return all();
  if (text == "human") return human();
  if (text == "human-valid") return human_valid();
  if (text == "models") return any_model();
  if (text.starts_with("model:") && text.size() > 6) {
    return model(std::string(text.substr(6)));
  }
  throw DataError(fmt::format(
      "unknown source filter '{}' (expected all, human, human-valid, models, "
      "or model:<id>)",
      text));
}

bool SourceFilter::matches(const Explanation& e) const {
  switch (kind_) {
    case Kind::kAll:
      return true;
    case Kind::kHuman:
      return e.source.is_human();
    case Kind::kHumanValid:
      return e.source.is_human() && e.human_valid.value_or(false);
    case Kind::kAnyModel:
      return e.source.is_model();
    case Kind::kModel:
      return e.source.is_model() && e.source.id == model_id_;
  }
  return false;
}

std::string SourceFilter::to_string() const {
  switch (kind_) {
    case Kind::kAll:
      return "all";
    case Kind::kHuman:
      return "human";
    case Kind::kHumanValid:
      return "human-valid";
    case Kind::kAnyModel:
      return "models";
    case Kind::kModel:
      return "model:" + model_id_;
  }
  return "all";
}

std::vector<ExplanationRef> explanation_refs(const Instance& instance) {
  std::map<std::pair<Label, Source>, std::size_t> seen;
  std::vector<ExplanationRef> refs;
  refs.reserve(instance.explanations.size());
  for (const auto& e : instance.explanations) {
    std::size_t& ordinal = seen[{e.label, e.source}];
    refs.push_back({instance.id, e.label, e.source, ordinal});
    ++ordinal;
  }
  return refs;
}

LabelSet explained_labels(const Instance& instance,
                          const SourceFilter& filter) {
  LabelSet labels;
  for (const auto& e : instance.explanations) {
    if (filter.matches(e)) labels.insert(e.label);
  }
  return labels;
}

Corpus::Corpus(std::vector<Instance> instances)
    : instances_(std::move(instances)) {
  index_.reserve(instances_.size());
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    const Instance& inst = instances_[i];
    if (text::is_blank(inst.id)) {
      throw DataError(fmt::format("instance #{} has an empty id", i + 1));
    }
    if (!index_.emplace(inst.id, i).second) {
      throw DataError(fmt::format("duplicate instance id '{}'", inst.id));
    }
    if (text::is_blank(inst.premise)) {
      throw DataError(fmt::format("instance '{}': empty premise", inst.id));
    }
    if (text::is_blank(inst.hypothesis)) {
      throw DataError(fmt::format("instance '{}': empty hypothesis", inst.id));
    }
    for (const auto& e : inst.explanations) {
      if (text::is_blank(e.text)) {
        throw DataError(fmt::format(
            "instance '{}': explanation for {} from {} has empty text",
            inst.id, to_string(e.label), e.source.to_string()));
      }
      for (const auto& [key, score] : e.scores) {
        if (!(score >= 0.0 && score <= 1.0)) {
          throw DataError(fmt::format(
              "instance '{}': score '{}' = {} outside [0, 1]", inst.id, key,
              score));
        }
      }
    }
  }
}

const Instance* Corpus::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &instances_[it->second];
}

std::size_t Corpus::explanation_count() const {
  std::size_t n = 0;
  for (const auto& inst : instances_) n += inst.explanations.size();
  return n;
}

std::map<std::string, LabelSet> label_sets(const Corpus& corpus,
                                           const SourceFilter& filter) {
  std::map<std::string, LabelSet> out;
  for (const auto& inst : corpus.instances()) {
    out[inst.id] = explained_labels(inst, filter);
  }
  return out;
}

namespace {

Label require_label(const json& obj, std::string_view field,
                    const Where& where) {
  const std::string raw = require_string(obj, field, where);
  auto label = parse_label(raw);
  if (!label) fail_field(where, field, fmt::format("unknown label '{}'", raw));
  return *label;
}

// Accepts JSON booleans and the usual string/number spellings.
std::optional<bool> loose_bool(const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer()) return v.get<long long>() != 0;
  if (v.is_string()) {
    const std::string s = text::to_lower_ascii(text::trim(v.get<std::string>()));
    if (s == "true" || s == "yes" || s == "y" || s == "1") return true;
    if (s == "false" || s == "no" || s == "n" || s == "0") return false;
  }
  return std::nullopt;
}

Explanation parse_canonical_annotation(const json& a, const Where& where) {
  if (!a.is_object()) fail_field(where, "annotations", "expected objects");
  Explanation e;
  e.label = require_label(a, "label", where);
  e.text = require_string(a, "text", where);
  if (text::is_blank(e.text)) fail_field(where, "text", "empty explanation");
  try {
    e.source = Source::parse(require_string(a, "source", where));
  } catch (const DataError& err) {
    fail_field(where, "source", err.what());
  }
  if (auto it = a.find("human_valid"); it != a.end() && !it->is_null()) {
    if (!it->is_boolean()) fail_field(where, "human_valid", "expected a bool");
    e.human_valid = it->get<bool>();
  }
  if (auto it = a.find("scores"); it != a.end() && !it->is_null()) {
    if (!it->is_object()) fail_field(where, "scores", "expected an object");
    for (const auto& [key, value] : it->items()) {
      if (!value.is_number()) {
        fail_field(where, "scores", fmt::format("'{}' is not a number", key));
      }
      const double score = value.get<double>();
      if (!(score >= 0.0 && score <= 1.0)) {
        fail_field(where, "scores",
                   fmt::format("'{}' = {} outside [0, 1]", key, score));
      }
      e.scores.emplace(key, score);
    }
  }
  if (auto it = a.find("finish_reason"); it != a.end() && !it->is_null()) {
    if (!it->is_string()) {
      fail_field(where, "finish_reason", "expected a string");
    }
    e.finish_reason = it->get<std::string>();
  }
  if (auto it = a.find("last_item"); it != a.end() && !it->is_null()) {
    if (!it->is_boolean()) fail_field(where, "last_item", "expected a bool");
    e.last_item = it->get<bool>();
  }
  return e;
}

Instance parse_canonical(const json& obj, const Where& where) {
  Instance inst;
  inst.id = require_string(obj, "id", where);
  inst.premise = require_string(obj, "premise", where);
  inst.hypothesis = require_string(obj, "hypothesis", where);
  if (auto it = obj.find("annotations"); it != obj.end() && !it->is_null()) {
    if (!it->is_array()) fail_field(where, "annotations", "expected an array");
    for (const auto& a : *it) {
      inst.explanations.push_back(parse_canonical_annotation(a, where));
    }
  }
  if (auto it = obj.find("pruned"); it != obj.end() && !it->is_null()) {
    if (!it->is_boolean()) fail_field(where, "pruned", "expected a bool");
    inst.pruned = it->get<bool>();
  }
  return inst;
}

struct UpstreamCounters {
  std::size_t skipped_blank = 0;
  std::size_t skipped_other_labels = 0;
};

// Upstream VariErr layout: {"id", "context", "statement", "entailment": [...],
// "neutral": [...], "contradiction": [...]} where each entry carries
// "annotator", "reason" and the round-2 "self_validated" judgment.
Instance parse_upstream(const json& obj, const Where& where,
                        UpstreamCounters& counters) {
  Instance inst;
  const json& id = require(obj, "id", where);
  if (id.is_string()) {
    inst.id = id.get<std::string>();
  } else if (id.is_number_integer()) {
    inst.id = std::to_string(id.get<long long>());
  } else {
    fail_field(where, "id", "expected a string or integer");
  }
  inst.premise = require_string(obj, "context", where);
  inst.hypothesis = require_string(obj, "statement", where);
  for (Label label : kAllLabels) {
    const std::string key(to_string(label));
    auto found = obj.find(key);
    if (found == obj.end() || found->is_null()) continue;
    if (!found->is_array()) fail_field(where, key, "expected an array");
    for (const auto& entry : *found) {
      if (!entry.is_object()) fail_field(where, key, "expected objects");
      const std::string reason = require_string(entry, "reason", where);
      if (text::is_blank(reason)) {
        ++counters.skipped_blank;
        continue;
      }
      Explanation e;
      e.label = label;
      e.text = reason;
      std::string annotator;
      if (auto a = entry.find("annotator"); a != entry.end()) {
        annotator = a->is_string() ? a->get<std::string>() : a->dump();
      }
      e.source = Source::human(annotator);
      if (auto v = entry.find("self_validated"); v != entry.end()) {
        if (!v->is_null()) {
          e.human_valid = loose_bool(*v);
          if (!e.human_valid) {
            fail_field(where, "self_validated",
                       fmt::format("unrecognized value {}", v->dump()));
          }
        }
      }
      inst.explanations.push_back(std::move(e));
    }
  }
  // Other label keys (e.g. an "I don't know" bucket) are outside the
  // three-way label set.
  for (const auto& key : {"idk", "unknown"}) {
    if (auto it = obj.find(key); it != obj.end() && it->is_array()) {
      counters.skipped_other_labels += it->size();
    }
  }
  return inst;
}

bool looks_upstream(const json& obj) {
  return obj.is_object() && obj.contains("context") &&
         obj.contains("statement") && !obj.contains("premise");
}

Corpus finish_load(std::vector<Instance> instances, std::string_view name,
                   const UpstreamCounters& counters) {
  if (instances.empty()) {
    throw DataError(fmt::format("{}: no instances", name));
  }
  Corpus corpus(std::move(instances));
  spdlog::debug("{}: {} instances, {} explanations", name, corpus.size(),
                corpus.explanation_count());
  if (counters.skipped_blank > 0 || counters.skipped_other_labels > 0) {
    spdlog::warn(
        "{}: skipped {} blank reasons and {} entries outside the three NLI "
        "labels",
        name, counters.skipped_blank, counters.skipped_other_labels);
  }
  return corpus;
}

}  // namespace

Corpus parse_corpus(std::istream& in, std::string_view name) {
  std::vector<Instance> instances;
  UpstreamCounters counters;

  // A leading '[' means the whole stream is one JSON array of records.
  in >> std::ws;
  if (in.peek() == '[') {
    json all;
    try {
      all = json::parse(in);
    } catch (const json::parse_error& e) {
      throw DataError(fmt::format("{}: invalid JSON: {}", name, e.what()));
    }
    std::size_t n = 0;
    for (const auto& obj : all) {
      const Where where{name, ++n};
      if (!obj.is_object()) fail_field(where, "record", "expected an object");
      instances.push_back(looks_upstream(obj)
                              ? parse_upstream(obj, where, counters)
                              : parse_canonical(obj, where));
    }
    return finish_load(std::move(instances), name, counters);
  }

  detail::for_each_jsonl(in, name, [&](const json& obj, const Where& where) {
    if (!obj.is_object()) fail_field(where, "record", "expected an object");
    instances.push_back(looks_upstream(obj)
                            ? parse_upstream(obj, where, counters)
                            : parse_canonical(obj, where));
  });
  return finish_load(std::move(instances), name, counters);
}

Corpus load_corpus(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_corpus(in, path.string());
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& inst : corpus.instances()) {
    ordered_json obj;
    obj["id"] = inst.id;
    obj["premise"] = inst.premise;
    obj["hypothesis"] = inst.hypothesis;
    ordered_json annotations = ordered_json::array();
    for (const auto& e : inst.explanations) {
      ordered_json a;
      a["label"] = std::string(to_string(e.label));
      a["text"] = e.text;
      a["source"] = e.source.to_string();
      if (e.human_valid) a["human_valid"] = *e.human_valid;
      if (!e.scores.empty()) {
        ordered_json scores = ordered_json::object();
        for (const auto& [key, score] : e.scores) scores[key] = score;
        a["scores"] = std::move(scores);
      }
      if (e.finish_reason) a["finish_reason"] = *e.finish_reason;
      if (e.last_item) a["last_item"] = true;
      annotations.push_back(std::move(a));
    }
    obj["annotations"] = std::move(annotations);
    if (inst.pruned) obj["pruned"] = true;
    out += detail::dump_line(obj);
  }
  return out;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  detail::write_text_file(path, serialize_corpus(corpus));
}

ReferenceDistribution make_reference(
    std::string id, const std::array<std::int64_t, 3>& counts) {
  std::int64_t total = 0;
  for (auto c : counts) {
    if (c < 0) {
      throw DataError(
          fmt::format("reference '{}': negative label count {}", id, c));
    }
    total += c;
  }
  if (total == 0) {
    throw DataError(fmt::format("reference '{}': zero total count", id));
  }
  std::array<double, 3> p{};
  for (std::size_t i = 0; i < 3; ++i) {
    p[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  }
  return {std::move(id), counts, LabelDistribution(p)};
}

namespace {

std::int64_t count_field(const json& counts, std::string_view key,
                         std::string_view alt, const Where& where) {
  const json* v = nullptr;
  if (auto it = counts.find(key); it != counts.end()) {
    v = &*it;
  } else if (auto it2 = counts.find(alt); it2 != counts.end()) {
    v = &*it2;
  }
  if (v == nullptr) return 0;
  if (v->is_number_integer()) return v->get<std::int64_t>();
  if (v->is_number_float()) {
    const double d = v->get<double>();
    if (d == std::floor(d)) return static_cast<std::int64_t>(d);
  }
  fail_field(where, "counts", fmt::format("'{}' is not an integer", key));
}

}  // namespace

ReferenceMap parse_reference(std::istream& in, std::string_view name) {
  ReferenceMap out;
  detail::for_each_jsonl(in, name, [&](const json& obj, const Where& where) {
    if (!obj.is_object()) fail_field(where, "record", "expected an object");
    std::string id;
    const json* counts = nullptr;
    if (obj.contains("counts")) {
      id = require_string(obj, "id", where);
      counts = &obj["counts"];
    } else if (obj.contains("label_counter")) {
      id = require_string(obj, "uid", where);
      counts = &obj["label_counter"];
    } else {
      fail_field(where, "counts", "missing");
    }
    if (!counts->is_object()) fail_field(where, "counts", "expected an object");
    const std::array<std::int64_t, 3> c = {
        count_field(*counts, "entailment", "e", where),
        count_field(*counts, "neutral", "n", where),
        count_field(*counts, "contradiction", "c", where)};
    ReferenceDistribution ref;
    try {
      ref = make_reference(id, c);
    } catch (const DataError& e) {
      throw DataError(fmt::format("{}: {}", where.str(), e.what()));
    }
    if (!out.emplace(id, std::move(ref)).second) {
      throw DataError(
          fmt::format("{}: duplicate reference id '{}'", where.str(), id));
    }
  });
  return out;
}

ReferenceMap load_reference(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_reference(in, path.string());
}

}  // namespace evade
