#include "evade/filter.hpp"

#include <set>

#include <fmt/format.h>

#include "evade/error.hpp"
#include "evade/text.hpp"
#include "json_util.hpp"

namespace evade::filter {

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::kKeep:
      return "keep";
    case Verdict::kFallback:
      return "fallback";
    case Verdict::kTruncated:
      return "truncated";
    case Verdict::kWrongLanguage:
      return "wrong_language";
  }
  return "keep";
}

std::string_view to_string(Reason reason) {
  switch (reason) {
    case Reason::kFallback:
      return "fallback";
    case Reason::kTruncated:
      return "truncated";
    case Reason::kWrongLanguage:
      return "wrong_language";
    case Reason::kDuplicate:
      return "duplicate";
  }
  return "fallback";
}

Classifier::Classifier(FilterConfig config) : config_(std::move(config)) {
  for (const auto& pattern : config_.fallback_patterns) {
    if (pattern.starts_with("re:")) {
      try {
        regexes_.emplace_back(pattern.substr(3),
                              std::regex::ECMAScript | std::regex::icase);
      } catch (const std::regex_error& e) {
        throw DataError(fmt::format("invalid fallback regex '{}': {}",
                                    pattern.substr(3), e.what()));
      }
    } else if (!pattern.empty()) {
      substrings_.push_back(text::to_lower_ascii(pattern));
    }
  }
}

bool Classifier::is_fallback(std::string_view text) const {
  const std::string lower = text::to_lower_ascii(text);
  for (const auto& s : substrings_) {
    if (lower.find(s) != std::string::npos) return true;
  }
  const std::string owned(text);
  for (const auto& re : regexes_) {
    if (std::regex_search(owned, re)) return true;
  }
  return false;
}

bool Classifier::has_foreign_script(std::string_view text) const {
  for (char32_t cp : text::decode_utf8(text)) {
    for (const auto& range : config_.foreign_scripts) {
      if (cp >= range.first && cp <= range.last) return true;
    }
  }
  return false;
}

namespace {

bool ends_with_terminal_punctuation(std::string_view text) {
  std::size_t end = text.size();
  // Skip closing quotes and brackets (ASCII and the UTF-8 curly quotes).
  while (end > 0) {
    const char c = text[end - 1];
    if (c == '"' || c == '\'' || c == ')' || c == ']' || c == ' ' ||
        c == '\t' || c == '\n' || c == '\r') {
      --end;
    } else if (end >= 3 && text.substr(end - 3, 3) == "”") {
      end -= 3;
    } else if (end >= 3 && text.substr(end - 3, 3) == "’") {
      end -= 3;
    } else {
      break;
    }
  }
  if (end == 0) return false;
  const char last = text[end - 1];
  return last == '.' || last == '?' || last == '!';
}

}  // namespace

bool Classifier::looks_truncated(std::string_view text,
                                 llm::FinishReason finish_reason,
                                 bool last_item) const {
  if (finish_reason == llm::FinishReason::kLength && last_item) return true;
  if (ends_with_terminal_punctuation(text)) return false;
  return text::split_whitespace(text).size() >= config_.truncation_min_tokens;
}

Verdict Classifier::classify(std::string_view text,
                             llm::FinishReason finish_reason,
                             bool last_item) const {
  if (is_fallback(text)) return Verdict::kFallback;
  if (has_foreign_script(text)) return Verdict::kWrongLanguage;
  if (looks_truncated(text, finish_reason, last_item)) {
    return Verdict::kTruncated;
  }
  return Verdict::kKeep;
}

Verdict classify_explanation(std::string_view text,
                             llm::FinishReason finish_reason, bool last_item,
                             const FilterConfig& config) {
  return Classifier(config).classify(text, finish_reason, last_item);
}

std::map<Reason, std::size_t> FilterReport::counts() const {
  std::map<Reason, std::size_t> out;
  for (const auto& r : removed) ++out[r.reason];
  return out;
}

nlohmann::ordered_json FilterReport::to_json() const {
  nlohmann::ordered_json obj;
  obj["kept_count"] = kept_count;
  obj["removed_count"] = removed.size();
  nlohmann::ordered_json by_reason = nlohmann::ordered_json::object();
  const auto c = counts();
  for (Reason r : {Reason::kFallback, Reason::kTruncated,
                   Reason::kWrongLanguage, Reason::kDuplicate}) {
    auto it = c.find(r);
    by_reason[std::string(to_string(r))] = it == c.end() ? 0 : it->second;
  }
  obj["by_reason"] = std::move(by_reason);
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& r : removed) {
    nlohmann::ordered_json item;
    item["instance_id"] = r.ref.instance_id;
    item["label"] = std::string(evade::to_string(r.ref.label));
    item["source"] = r.ref.source.to_string();
    item["ordinal"] = r.ref.ordinal;
    item["reason"] = std::string(to_string(r.reason));
    item["text"] = r.text;
    list.push_back(std::move(item));
  }
  obj["removed"] = std::move(list);
  return obj;
}

namespace {

Reason reason_for(Verdict v) {
  switch (v) {
    case Verdict::kFallback:
      return Reason::kFallback;
    case Verdict::kTruncated:
      return Reason::kTruncated;
    case Verdict::kWrongLanguage:
      return Reason::kWrongLanguage;
    case Verdict::kKeep:
      break;
  }
  throw std::logic_error("keep verdict has no removal reason");
}

}  // namespace

FilterResult filter_corpus(const Corpus& corpus, const FilterConfig& config) {
  const Classifier classifier(config);
  FilterReport report;
  std::vector<Instance> out;
  out.reserve(corpus.size());

  for (const auto& inst : corpus.instances()) {
    const auto refs = explanation_refs(inst);
    Instance kept = inst;
    kept.explanations.clear();
    std::set<std::tuple<Label, Source, std::string>> seen;

    for (std::size_t i = 0; i < inst.explanations.size(); ++i) {
      const Explanation& e = inst.explanations[i];
      if (e.source.is_human()) {
        kept.explanations.push_back(e);
        continue;
      }
      const auto finish = llm::parse_finish_reason(e.finish_reason.value_or(""));
      const Verdict v = classifier.classify(e.text, finish, e.last_item);
      if (v != Verdict::kKeep) {
        report.removed.push_back({refs[i], e.text, reason_for(v)});
        continue;
      }
      if (!seen.emplace(e.label, e.source, text::normalize_whitespace(e.text))
               .second) {
        report.removed.push_back({refs[i], e.text, Reason::kDuplicate});
        continue;
      }
      kept.explanations.push_back(e);
    }
    report.kept_count += kept.explanations.size();
    out.push_back(std::move(kept));
  }
  return {Corpus(std::move(out)), std::move(report)};
}

}  // namespace evade::filter
