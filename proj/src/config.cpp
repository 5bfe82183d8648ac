#include "evade/config.hpp"

#include <fmt/format.h>

#include "evade/error.hpp"
#include "json_util.hpp"

namespace evade {

namespace {

using detail::json;
using detail::ordered_json;

// Walks one JSON object, rejecting keys nobody asked for so typos in a
// config never silently fall back to defaults.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail("", "expected an object");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : obj_.items()) {
      if (seen_.count(key) == 0) fail(key, "unknown key");
    }
  }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() || it->is_null() ? nullptr : &*it;
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (const json* v = get(key)) {
      try {
        out = v->get<T>();
      } catch (const json::exception&) {
        fail(key, "wrong type");
      }
    }
  }

  void read_number(const std::string& key, double& out, double lo, double hi) {
    if (const json* v = get(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
      if (out < lo || out > hi) fail(key, fmt::format("must lie in [{}, {}]", lo, hi));
    }
  }

  [[noreturn]] void fail(const std::string& key, std::string_view problem) const {
    const std::string where = key.empty() ? path_ : path_ + "." + key;
    throw DataError(fmt::format("config: '{}': {}", where, problem));
  }

  std::string child(const std::string& key) const { return path_ + "." + key; }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_decoding(Section& s, llm::Decoding& d) {
  s.read_number("temperature", d.temperature, 0.0, 2.0);
  s.read("max_tokens", d.max_tokens);
  if (d.max_tokens < 1) s.fail("max_tokens", "must be positive");
}

ordered_json decoding_json(const llm::Decoding& d) {
  return {{"temperature", d.temperature}, {"max_tokens", d.max_tokens}};
}

}  // namespace

Config Config::from_json(const json& doc) {
  Config c;
  Section root(doc, "config");
  std::string path;
  root.read("corpus", path);
  c.corpus = path;
  path.clear();
  root.read("reference", path);
  c.reference = path;
  path = c.out_dir.string();
  root.read("out_dir", path);
  c.out_dir = path;
  root.read("workers", c.workers);
  if (c.workers == 0) root.fail("workers", "must be positive");
  root.read("seed", c.seed);

  if (const json* g = root.get("generation")) {
    Section s(*g, root.child("generation"));
    s.read("models", c.generation.models);
    if (const json* p = s.get("relationship_phrases")) {
      Section ps(*p, s.child("relationship_phrases"));
      for (Label l : kAllLabels) {
        ps.read(std::string(to_string(l)), c.generation.relationship_phrases[index_of(l)]);
      }
    }
    read_decoding(s, c.generation.decoding);
  }

  if (const json* f = root.get("filter")) {
    Section s(*f, root.child("filter"));
    s.read("fallback_patterns", c.filter.fallback_patterns);
    s.read("truncation_min_tokens", c.filter.truncation_min_tokens);
    if (const json* ranges = s.get("foreign_scripts")) {
      if (!ranges->is_array()) s.fail("foreign_scripts", "expected [[first, last], ...]");
      c.filter.foreign_scripts.clear();
      for (const auto& r : *ranges) {
        if (!r.is_array() || r.size() != 2 || !r[0].is_number_unsigned() ||
            !r[1].is_number_unsigned() || r[0].get<std::uint32_t>() > r[1].get<std::uint32_t>()) {
          s.fail("foreign_scripts", "expected [[first, last], ...] code points");
        }
        c.filter.foreign_scripts.push_back(
            {static_cast<char32_t>(r[0].get<std::uint32_t>()),
             static_cast<char32_t>(r[1].get<std::uint32_t>())});
      }
    }
  }

  if (const json* v = root.get("validation")) {
    Section s(*v, root.child("validation"));
    s.read("validators", c.validation.validators);
    if (const json* sc = s.get("scenarios")) {
      if (!sc->is_array()) s.fail("scenarios", "expected an array");
      c.validation.scenarios.clear();
      for (const auto& name : *sc) {
        if (!name.is_string()) s.fail("scenarios", "expected strings");
        c.validation.scenarios.push_back(validator::parse_scenario(name.get<std::string>()));
      }
    }
    s.read("targets", c.validation.targets);
    if (!c.validation.targets.empty()) SourceFilter::parse(c.validation.targets);
    s.read("parse_retries", c.validation.parse_retries);
    if (c.validation.parse_retries < 0) s.fail("parse_retries", "must be >= 0");
    read_decoding(s, c.validation.decoding);
  }

  if (const json* k = root.get("calibration")) {
    Section s(*k, root.child("calibration"));
    s.read("grid", c.calibration.grid);
    s.read_number("kld_slack", c.calibration.kld_slack, 0.0, 1e9);
    s.read_number("epsilon", c.calibration.epsilon, 1e-300, 1.0);
    s.read("strict_gt", c.calibration.strict_gt);
    s.read("gold", c.calibration.gold);
    SourceFilter::parse(c.calibration.gold);
    if (s.get("tau") != nullptr) {
      double tau = 0.0;
      s.read_number("tau", tau, 0.0, 1.0);
      c.calibration.tau = tau;
    }
  }

  if (const json* m = root.get("metrics")) {
    Section s(*m, root.child("metrics"));
    s.read("ngram_orders", c.metrics.ngram_orders);
    if (c.metrics.ngram_orders.empty() || *c.metrics.ngram_orders.begin() == 0) {
      s.fail("ngram_orders", "must be non-empty and >= 1");
    }
    s.read("tagger", c.metrics.tagger);
    s.read("embeddings", c.metrics.embeddings);
    s.read("top_k", c.metrics.top_k);
    if (c.metrics.top_k == 0) s.fail("top_k", "must be positive");
  }

  if (const json* p = root.get("prune")) {
    Section s(*p, root.child("prune"));
    PruneSection prune;
    s.read("validator", prune.validator);
    if (prune.validator.empty()) s.fail("validator", "required");
    std::string scenario(validator::to_string(prune.scenario));
    s.read("scenario", scenario);
    prune.scenario = validator::parse_scenario(scenario);
    if (s.get("tau") != nullptr) {
      double tau = 0.0;
      s.read_number("tau", tau, 0.0, 1.0);
      prune.tau = tau;
    }
    c.prune = prune;
  }

  if (const json* b = root.get("backend")) {
    Section s(*b, root.child("backend"));
    s.read("base_url", c.backend.base_url);
    s.read("embedding_model", c.backend.embedding_model);
    s.read("retries", c.backend.retries);
    if (c.backend.retries < 0) s.fail("retries", "must be >= 0");
  }

  c.generation.decoding.seed = c.seed;
  c.validation.decoding.seed = c.seed;
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  return from_json(detail::read_json_file(path));
}

ordered_json Config::to_json() const {
  ordered_json o;
  o["corpus"] = corpus.string();
  o["reference"] = reference.string();
  o["out_dir"] = out_dir.string();
  o["workers"] = workers;
  o["seed"] = seed;

  ordered_json phrases;
  for (Label l : kAllLabels) {
    phrases[std::string(to_string(l))] = generation.relationship_phrases[index_of(l)];
  }
  o["generation"] = {{"models", generation.models},
                     {"relationship_phrases", phrases}};
  o["generation"].update(decoding_json(generation.decoding));

  auto ranges = ordered_json::array();
  for (const auto& r : filter.foreign_scripts) {
    ranges.push_back({static_cast<std::uint32_t>(r.first),
                      static_cast<std::uint32_t>(r.last)});
  }
  o["filter"] = {{"fallback_patterns", filter.fallback_patterns},
                 {"foreign_scripts", ranges},
                 {"truncation_min_tokens", filter.truncation_min_tokens}};

  auto scenarios = ordered_json::array();
  for (auto s : validation.scenarios) scenarios.push_back(std::string(validator::to_string(s)));
  o["validation"] = {{"validators", validation.validators},
                     {"scenarios", scenarios},
                     {"targets", validation.targets},
                     {"parse_retries", validation.parse_retries}};
  o["validation"].update(decoding_json(validation.decoding));

  o["calibration"] = {{"grid", calibration.grid},
                      {"kld_slack", calibration.kld_slack},
                      {"epsilon", calibration.epsilon},
                      {"strict_gt", calibration.strict_gt},
                      {"gold", calibration.gold}};
  o["calibration"]["tau"] =
      calibration.tau ? ordered_json(*calibration.tau) : ordered_json(nullptr);

  o["metrics"] = {{"ngram_orders", metrics.ngram_orders},
                  {"tagger", metrics.tagger},
                  {"embeddings", metrics.embeddings},
                  {"top_k", metrics.top_k}};
  if (prune) {
    o["prune"] = {{"validator", prune->validator},
                  {"scenario", std::string(validator::to_string(prune->scenario))}};
    o["prune"]["tau"] = prune->tau ? ordered_json(*prune->tau) : ordered_json(nullptr);
  }
  o["backend"] = {{"base_url", backend.base_url},
                  {"embedding_model", backend.embedding_model},
                  {"retries", backend.retries}};
  return o;
}

}  // namespace evade
