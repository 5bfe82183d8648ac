#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace evade::metrics {

// Maps a text to its part-of-speech tag sequence.
class PosTagger {
 public:
  virtual ~PosTagger() = default;
  virtual std::vector<std::string> tag(std::string_view text) const = 0;
  // Recorded in report headers; syntactic scores are only comparable under
  // the same tagger.
  virtual std::string id() const = 0;
};

// Whitespace tokens with leading/trailing punctuation and the clitics
// "n't" and "'s" split off.
std::vector<std::string> tokenize_for_tagging(std::string_view text);

// Deterministic lexicon-plus-suffix tagger emitting Penn Treebank tags.
class RuleBasedTagger : public PosTagger {
 public:
  std::vector<std::string> tag(std::string_view text) const override;
  std::string id() const override { return "evade-rules-v1"; }
};

// Tags supplied ahead of time, JSONL {"text": str, "tags": [str, ...]}.
class PrecomputedTagger : public PosTagger {
 public:
  explicit PrecomputedTagger(std::string id = "precomputed") : id_(std::move(id)) {}
  static PrecomputedTagger load(const std::filesystem::path& path);

  void add(std::string text, std::vector<std::string> tags);
  // Throws DataError naming the text when it has no tags.
  std::vector<std::string> tag(std::string_view text) const override;
  std::string id() const override { return id_; }

 private:
  std::string id_;
  std::map<std::string, std::vector<std::string>, std::less<>> tags_;
};

}  // namespace evade::metrics
