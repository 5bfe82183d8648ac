#pragma once

#include <cstddef>
#include <map>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "evade/corpus.hpp"
#include "evade/gateway.hpp"

namespace evade::filter {

enum class Verdict { kKeep, kFallback, kTruncated, kWrongLanguage };

enum class Reason { kFallback, kTruncated, kWrongLanguage, kDuplicate };

std::string_view to_string(Verdict verdict);
std::string_view to_string(Reason reason);

struct CodepointRange {
  char32_t first = 0;
  char32_t last = 0;
};

struct FilterConfig {
  // Case-insensitive substrings; entries prefixed "re:" are ECMAScript
  // regexes, also case-insensitive.
  std::vector<std::string> fallback_patterns = {
      "no explanations", "not supported by the context", "cannot be justified",
      "unable to provide"};
  // Default: CJK Unified Ideographs and Extension A.
  std::vector<CodepointRange> foreign_scripts = {{0x4E00, 0x9FFF},
                                                 {0x3400, 0x4DBF}};
  // Unpunctuated items with at least this many tokens count as truncated.
  std::size_t truncation_min_tokens = 6;
};

// Precompiled form of a FilterConfig.
class Classifier {
 public:
  explicit Classifier(FilterConfig config);

  // Precedence: fallback > wrong_language > truncated.
  Verdict classify(std::string_view text, llm::FinishReason finish_reason,
                   bool last_item) const;

  bool is_fallback(std::string_view text) const;
  bool has_foreign_script(std::string_view text) const;
  bool looks_truncated(std::string_view text, llm::FinishReason finish_reason,
                       bool last_item) const;

 private:
  FilterConfig config_;
  std::vector<std::string> substrings_;  // lowercased
  std::vector<std::regex> regexes_;
};

Verdict classify_explanation(std::string_view text,
                             llm::FinishReason finish_reason, bool last_item,
                             const FilterConfig& config = {});

struct Removal {
  ExplanationRef ref;
  std::string text;
  Reason reason = Reason::kFallback;
};

struct FilterReport {
  std::vector<Removal> removed;
  std::size_t kept_count = 0;

  std::map<Reason, std::size_t> counts() const;
  nlohmann::ordered_json to_json() const;
};

struct FilterResult {
  Corpus corpus;
  FilterReport report;
};

// Drops model records classified as non-keep, then collapses exact
// duplicates (after whitespace normalization) within each
// (instance, label, source). Human records are never touched.
FilterResult filter_corpus(const Corpus& corpus,
                           const FilterConfig& config = {});

}  // namespace evade::filter
