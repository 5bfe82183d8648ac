#include "evade/tagger.hpp"

#include <cctype>
#include <unordered_map>

#include <fmt/format.h>

#include "evade/error.hpp"
#include "evade/text.hpp"
#include "json_util.hpp"

namespace evade::metrics {

namespace {

bool is_punct_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u) != 0;
}

bool all_punct(std::string_view s) {
  for (char c : s) {
    if (!is_punct_char(c)) return false;
  }
  return !s.empty();
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() > suffix.size() && s.ends_with(suffix);
}

const std::unordered_map<std::string, std::string>& lexicon() {
  static const std::unordered_map<std::string, std::string> table = [] {
    std::unordered_map<std::string, std::string> t;
    auto put = [&](std::initializer_list<const char*> words, const char* tag) {
      for (const char* w : words) t.emplace(w, tag);
    };
    put({"the", "a", "an", "this", "these", "those", "every", "each", "some",
         "any", "no", "all", "both", "another", "either", "neither"},
        "DT");
    put({"in", "on", "at", "of", "for", "with", "by", "from", "into", "about",
         "over", "under", "after", "before", "between", "through", "during",
         "without", "within", "near", "as", "than", "like", "because",
         "since", "while", "if", "whether", "although", "though", "unless",
         "until", "upon", "onto", "against", "among", "around", "behind",
         "beside", "beyond", "across", "along", "that", "outside", "inside"},
        "IN");
    put({"to"}, "TO");
    put({"i", "you", "he", "she", "it", "we", "they", "me", "him", "us",
         "them", "her", "himself", "herself", "itself", "themselves",
         "someone", "something", "anyone", "anything", "nobody", "nothing",
         "everyone", "everything"},
        "PRP");
    put({"my", "your", "his", "its", "our", "their"}, "PRP$");
    put({"and", "or", "but", "nor", "yet"}, "CC");
    put({"can", "could", "may", "might", "must", "shall", "should", "will",
         "would", "ca", "wo"},
        "MD");
    put({"is", "has", "does"}, "VBZ");
    put({"are", "am", "have", "do"}, "VBP");
    put({"was", "were", "had", "did"}, "VBD");
    put({"be"}, "VB");
    put({"been"}, "VBN");
    put({"being"}, "VBG");
    put({"not", "n't", "very", "also", "just", "only", "never", "always",
         "often", "too", "still", "even", "already", "here", "now", "then",
         "really", "probably", "necessarily", "so", "more", "most", "less",
         "least", "again", "however", "perhaps", "maybe"},
        "RB");
    put({"there"}, "EX");
    put({"who", "what", "whom"}, "WP");
    put({"whose"}, "WP$");
    put({"which"}, "WDT");
    put({"where", "when", "why", "how"}, "WRB");
    put({"'s"}, "POS");
    put({"one", "two", "three", "four", "five", "six", "seven", "eight",
         "nine", "ten", "hundred", "thousand", "million"},
        "CD");
    put({"good", "bad", "new", "old", "big", "small", "same", "different",
         "other", "many", "much", "few", "several", "true", "false", "likely",
         "unlikely", "possible", "impossible", "certain", "clear", "likely"},
        "JJ");
    return t;
  }();
  return table;
}

std::string punct_tag(std::string_view token) {
  if (token == "." || token == "?" || token == "!") return ".";
  if (token == ",") return ",";
  if (token == ":" || token == ";" || token == "-" || token == "--" ||
      token == "...") {
    return ":";
  }
  if (token == "(" || token == "[" || token == "{") return "-LRB-";
  if (token == ")" || token == "]" || token == "}") return "-RRB-";
  if (token == "\"" || token == "''" || token == "'") return "''";
  if (token == "$") return "$";
  if (token == "#") return "#";
  return "SYM";
}

bool is_number(std::string_view token) {
  bool digit = false;
  for (char c : token) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      digit = true;
    } else if (c != '.' && c != ',' && c != '-' && c != '%') {
      return false;
    }
  }
  return digit;
}

std::string open_class_tag(const std::string& lower, std::string_view prev) {
  const bool after_aux = prev == "VBZ" || prev == "VBP" || prev == "VBD" ||
                         prev == "VB" || prev == "VBN";
  if (ends_with(lower, "ly")) return "RB";
  if (ends_with(lower, "ing")) return "VBG";
  if (ends_with(lower, "ed")) return after_aux ? "VBN" : "VBD";
  if (ends_with(lower, "est")) return "JJS";
  for (std::string_view s : {"ness", "ment", "tion", "sion", "ity", "ance",
                             "ence", "ship", "ism", "ist"}) {
    if (ends_with(lower, s)) return "NN";
  }
  for (std::string_view s :
       {"ous", "ful", "less", "able", "ible", "ive", "al", "ic", "ish", "ary"}) {
    if (ends_with(lower, s)) return "JJ";
  }
  if (prev == "TO" || prev == "MD") return "VB";
  if (ends_with(lower, "s") && !ends_with(lower, "ss") &&
      !ends_with(lower, "us") && !ends_with(lower, "is")) {
    if (prev == "PRP" || prev == "NN" || prev == "NNP") return "VBZ";
    return "NNS";
  }
  return "NN";
}

}  // namespace

std::vector<std::string> tokenize_for_tagging(std::string_view input) {
  std::vector<std::string> out;
  for (const std::string& raw : text::split_whitespace(input)) {
    std::string_view word = raw;
    std::vector<std::string> trailing;
    while (!word.empty() && is_punct_char(word.front()) &&
           !all_punct(word) && word.front() != '$' && word.front() != '#') {
      out.emplace_back(1, word.front());
      word.remove_prefix(1);
    }
    if (all_punct(word)) {
      out.emplace_back(word);
      continue;
    }
    while (!word.empty() && is_punct_char(word.back()) && word.back() != '%') {
      trailing.emplace_back(1, word.back());
      word.remove_suffix(1);
    }
    std::string lower = text::to_lower_ascii(word);
    if (lower.size() > 3 && lower.ends_with("n't")) {
      out.emplace_back(word.substr(0, word.size() - 3));
      out.emplace_back(word.substr(word.size() - 3));
    } else if (lower.size() > 2 && lower.ends_with("'s")) {
      out.emplace_back(word.substr(0, word.size() - 2));
      out.emplace_back(word.substr(word.size() - 2));
    } else if (!word.empty()) {
      out.emplace_back(word);
    }
    for (auto it = trailing.rbegin(); it != trailing.rend(); ++it) {
      out.push_back(*it);
    }
  }
  return out;
}

std::vector<std::string> RuleBasedTagger::tag(std::string_view text) const {
  const auto tokens = tokenize_for_tagging(text);
  std::vector<std::string> tags;
  tags.reserve(tokens.size());
  bool sentence_start = true;
  for (const auto& token : tokens) {
    const std::string prev = tags.empty() ? std::string() : tags.back();
    std::string tag;
    const std::string lower = text::to_lower_ascii(token);
    if (all_punct(token)) {
      tag = punct_tag(token);
    } else if (is_number(token)) {
      tag = "CD";
    } else if (auto it = lexicon().find(lower); it != lexicon().end()) {
      tag = it->second;
      // "that" after a noun or verb introduces a clause; before a noun it
      // is a determiner. Without lookahead keep IN, except sentence-initially.
      if (lower == "that" && sentence_start) tag = "DT";
      if ((lower == "do" || lower == "have") && (prev == "TO" || prev == "MD")) {
        tag = "VB";
      }
    } else if (!sentence_start &&
               std::isupper(static_cast<unsigned char>(token.front()))) {
      tag = "NNP";
    } else {
      tag = open_class_tag(lower, prev);
    }
    sentence_start = (tag == ".");
    tags.push_back(std::move(tag));
  }
  return tags;
}

PrecomputedTagger PrecomputedTagger::load(const std::filesystem::path& path) {
  PrecomputedTagger tagger("precomputed:" + path.filename().string());
  auto in = detail::open_input(path);
  const std::string name = path.string();
  detail::for_each_jsonl(
      in, name, [&](const detail::json& obj, const detail::Where& where) {
        std::string text = detail::require_string(obj, "text", where);
        const auto& tags = detail::require(obj, "tags", where);
        if (!tags.is_array()) detail::fail_field(where, "tags", "expected an array");
        std::vector<std::string> seq;
        for (const auto& t : tags) {
          if (!t.is_string()) detail::fail_field(where, "tags", "expected strings");
          seq.push_back(t.get<std::string>());
        }
        tagger.add(std::move(text), std::move(seq));
      });
  return tagger;
}

void PrecomputedTagger::add(std::string text, std::vector<std::string> tags) {
  tags_.insert_or_assign(std::move(text), std::move(tags));
}

std::vector<std::string> PrecomputedTagger::tag(std::string_view text) const {
  auto it = tags_.find(text);
  if (it == tags_.end()) {
    throw DataError(fmt::format("no precomputed POS tags for text '{}'", text));
  }
  return it->second;
}

}  // namespace evade::metrics
