#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "evade/corpus.hpp"
#include "evade/gateway.hpp"

namespace evade::generator {

struct GenerationConfig {
  std::string model_id;
  // Phrase substituted for {relationship}, indexed by index_of(label).
  std::array<std::string, 3> relationship_phrases = {
      "true", "neither true nor false", "false"};
  llm::Decoding decoding;
  std::size_t workers = 8;

  const std::string& phrase(Label label) const {
    return relationship_phrases[index_of(label)];
  }
};

// Explanation-generation system prompt with {relationship} unfilled.
extern const std::string_view kSystemTemplate;

llm::ChatRequest build_generation_prompt(const Instance& instance, Label label,
                                         const GenerationConfig& cfg);

// Items of a numbered list ("1. ...", "2. ..."). Lines before the first
// marker are ignored, continuation lines join with one space, a blank line
// ends the current item, and punctuation-only items are dropped. Output
// without any numbered item yields an empty list.
std::vector<std::string> parse_generation(std::string_view text);

// Inverse of parse_generation for marker-free single-line items.
std::string format_numbered_list(const std::vector<std::string>& items);

struct GenerationManifest {
  std::string model_id;
  llm::Decoding decoding;
  std::size_t instances = 0;
  std::size_t requests = 0;
  std::size_t explanations = 0;
  std::size_t empty_responses = 0;
  std::size_t truncated_responses = 0;
  llm::GatewayStats cache;

  nlohmann::ordered_json to_json(bool include_cache = true) const;
};

struct GenerationResult {
  Corpus corpus;
  GenerationManifest manifest;
};

// One request per (instance, label); parsed items are appended after the
// instance's existing records with source model:<model_id>.
GenerationResult generate_corpus(const Corpus& corpus,
                                 const GenerationConfig& cfg,
                                 llm::Gateway& gateway);

}  // namespace evade::generator
