#include "evade/generator.hpp"

#include <atomic>
#include <cctype>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "evade/parallel.hpp"
#include "evade/text.hpp"
#include "json_util.hpp"

namespace evade::generator {

const std::string_view kSystemTemplate =
    "You are an expert in Natural Language Inference (NLI). List every "
    "distinct explanation for why the statement is {relationship} given the "
    "context below without introductory phrases.\n"
    "If you think the relationship is false given the context, you can "
    "choose not to provide explanations. Do not repeat or paraphrase the same "
    "idea in different words. End your answer after all reasonable distinct "
    "explanations are listed.\n"
    "Format your answer as a numbered list (e.g., 1., 2., 3.)";

llm::ChatRequest build_generation_prompt(const Instance& instance, Label label,
                                         const GenerationConfig& cfg) {
  std::string system(kSystemTemplate);
  constexpr std::string_view kSlot = "{relationship}";
  system.replace(system.find(kSlot), kSlot.size(), cfg.phrase(label));

  llm::ChatRequest request;
  request.model_id = cfg.model_id;
  request.messages = {
      {"system", std::move(system)},
      {"user", fmt::format("Context: {}\nStatement: {}", instance.premise,
                           instance.hypothesis)}};
  request.decoding = cfg.decoding;
  request.tag = fmt::format("generate/{}/{}/{}", cfg.model_id, instance.id,
                            to_string(label));
  return request;
}

namespace {

// Length of a leading "N." marker (including following spaces), or 0.
std::size_t marker_length(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  const std::size_t digits_start = i;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) {
    ++i;
  }
  if (i == digits_start || i >= line.size() || line[i] != '.') return 0;
  ++i;
  if (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) {
    return 0;  // "1.5 metres" is not a marker
  }
  return i;
}

bool punctuation_only(std::string_view s) {
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (u >= 0x80) return false;
    if (!std::ispunct(u) && !std::isspace(u)) return false;
  }
  return true;
}

}  // namespace

std::vector<std::string> parse_generation(std::string_view text) {
  std::vector<std::string> items;
  std::string current;
  bool open = false;
  bool saw_marker = false;

  auto close = [&] {
    if (open) {
      std::string item = text::trim(current);
      if (!punctuation_only(item)) items.push_back(std::move(item));
    }
    current.clear();
    open = false;
  };

  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;

    if (const std::size_t m = marker_length(line); m > 0) {
      close();
      saw_marker = true;
      open = true;
      current = text::trim(line.substr(m));
    } else if (text::is_blank(line)) {
      close();
    } else if (open) {
      current += ' ';
      current += text::trim(line);
    }
  }
  close();

  if (!saw_marker && !text::is_blank(text)) {
    spdlog::debug("generation output has no numbered items; treating as "
                  "abstention");
  }
  return items;
}

std::string format_numbered_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += '\n';
    out += fmt::format("{}. {}", i + 1, items[i]);
  }
  return out;
}

nlohmann::ordered_json GenerationManifest::to_json(bool include_cache) const {
  nlohmann::ordered_json obj;
  obj["model"] = model_id;
  obj["decoding"] = {{"temperature", decoding.temperature},
                     {"max_tokens", decoding.max_tokens}};
  if (decoding.seed) obj["decoding"]["seed"] = *decoding.seed;
  obj["instances"] = instances;
  obj["requests"] = requests;
  obj["explanations"] = explanations;
  obj["empty_responses"] = empty_responses;
  obj["truncated_responses"] = truncated_responses;
  if (include_cache) {
    obj["cache"] = {{"requests", cache.requests},
                    {"hits", cache.cache_hits},
                    {"backend_calls", cache.backend_calls},
                    {"hit_rate", cache.hit_rate()}};
  }
  return obj;
}

GenerationResult generate_corpus(const Corpus& corpus,
                                 const GenerationConfig& cfg,
                                 llm::Gateway& gateway) {
  struct Outcome {
    std::vector<std::string> items;
    llm::FinishReason finish = llm::FinishReason::kStop;
  };

  const auto& instances = corpus.instances();
  const std::size_t tasks = instances.size() * kAllLabels.size();
  std::vector<Outcome> outcomes(tasks);
  std::atomic<std::size_t> done{0};
  const llm::GatewayStats before = gateway.stats();

  try {
    parallel_for(tasks, cfg.workers, [&](std::size_t t) {
      const Instance& inst = instances[t / kAllLabels.size()];
      const Label label = kAllLabels[t % kAllLabels.size()];
      const llm::ChatResponse response =
          gateway.complete(build_generation_prompt(inst, label, cfg));
      outcomes[t] = {parse_generation(response.text), response.finish_reason};
      ++done;
    });
  } catch (...) {
    spdlog::error(
        "generation with {} aborted after {}/{} requests; completed "
        "responses are cached and the run can be resumed",
        cfg.model_id, done.load(), tasks);
    throw;
  }

  GenerationManifest manifest;
  manifest.model_id = cfg.model_id;
  manifest.decoding = cfg.decoding;
  manifest.instances = instances.size();
  manifest.requests = tasks;

  std::vector<Instance> out;
  out.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    Instance inst = instances[i];
    for (std::size_t l = 0; l < kAllLabels.size(); ++l) {
      const Outcome& o = outcomes[i * kAllLabels.size() + l];
      if (o.items.empty()) ++manifest.empty_responses;
      if (o.finish == llm::FinishReason::kLength) {
        ++manifest.truncated_responses;
      }
      for (std::size_t k = 0; k < o.items.size(); ++k) {
        Explanation e;
        e.label = kAllLabels[l];
        e.text = o.items[k];
        e.source = Source::model(cfg.model_id);
        e.finish_reason = std::string(llm::to_string(o.finish));
        e.last_item = (k + 1 == o.items.size());
        inst.explanations.push_back(std::move(e));
        ++manifest.explanations;
      }
    }
    out.push_back(std::move(inst));
  }

  const llm::GatewayStats after = gateway.stats();
  manifest.cache.requests = after.requests - before.requests;
  manifest.cache.cache_hits = after.cache_hits - before.cache_hits;
  manifest.cache.backend_calls = after.backend_calls - before.backend_calls;
  return {Corpus(std::move(out)), manifest};
}

}  // namespace evade::generator
