#include "evade/pipeline.hpp"

#include <algorithm>
#include <cstdlib>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "evade/error.hpp"
#include "evade/filter.hpp"
#include "evade/generator.hpp"
#include "evade/metrics.hpp"
#include "json_util.hpp"

namespace evade::pipeline {

namespace fs = std::filesystem;
using detail::ordered_json;
using validator::Scenario;

namespace {

std::string run_stem(const std::string& validator, Scenario scenario) {
  // Model ids may contain '/', which must not create directories.
  std::string v = validator;
  for (char& c : v) {
    if (c == '/' || c == '\\' || c == ':') c = '_';
  }
  return fmt::format("{}.{}", v, validator::to_string(scenario));
}

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

ordered_json cache_json(const llm::GatewayStats& s) {
  return {{"requests", s.requests},
          {"cache_hits", s.cache_hits},
          {"backend_calls", s.backend_calls},
          {"hit_rate", s.hit_rate()}};
}

// Cache statistics differ between cold and warm runs, so they live beside
// the artifact instead of inside it.
void write_manifest(const fs::path& artifact, ordered_json body) {
  detail::write_text_file(artifact.string() + ".manifest.json",
                          detail::dump_pretty(body));
}

struct RunSpec {
  std::string validator;
  Scenario scenario;
};

std::vector<RunSpec> run_specs(const Config& config) {
  std::vector<RunSpec> out;
  for (const auto& v : config.validation.validators) {
    for (Scenario s : config.validation.scenarios) out.push_back({v, s});
  }
  return out;
}

SourceFilter targets_for(const Config& config, const std::string& validator) {
  return config.validation.targets.empty()
             ? SourceFilter::model(validator)
             : SourceFilter::parse(config.validation.targets);
}

std::optional<ReferenceMap> load_reference_if_set(const Config& config) {
  if (config.reference.empty()) return std::nullopt;
  return load_reference(config.reference);
}

ordered_json nullable(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json verdict_counts(const std::vector<validator::ErrorVerdict>& verdicts) {
  std::map<std::string, std::size_t> counts;
  for (const auto& v : verdicts) ++counts[std::string(validator::to_string(v.status))];
  ordered_json o = ordered_json::object();
  for (const auto& [k, n] : counts) o[k] = n;
  return o;
}

metrics::EmbedFn make_embed(const Config& config, llm::Gateway* gateway,
                            std::shared_ptr<llm::EmbeddingTable>& table) {
  const std::string& spec = config.metrics.embeddings;
  if (spec == "none") return {};
  if (spec == "gateway") {
    if (gateway == nullptr) throw DataError("embeddings=gateway needs a backend");
    return [gateway](const std::vector<std::string>& texts) {
      return gateway->embed(texts);
    };
  }
  table = std::make_shared<llm::EmbeddingTable>(llm::EmbeddingTable::load(spec));
  return [table](const std::vector<std::string>& texts) {
    std::vector<llm::Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
      const llm::Vector* v = table->find(t);
      if (v == nullptr) {
        throw DataError(fmt::format("no precomputed embedding for text '{}'", t));
      }
      out.push_back(*v);
    }
    return out;
  };
}

}  // namespace

fs::path Layout::run(const std::string& validator, Scenario scenario) const {
  return root / "runs" / (run_stem(validator, scenario) + ".json");
}
fs::path Layout::verdicts(const std::string& validator, Scenario scenario) const {
  return root / "verdicts" / (run_stem(validator, scenario) + ".json");
}
fs::path Layout::sweep_csv(const std::string& validator, Scenario scenario) const {
  return root / "sweeps" / (run_stem(validator, scenario) + ".csv");
}
fs::path Layout::selection(const std::string& validator, Scenario scenario) const {
  return root / "sweeps" / (run_stem(validator, scenario) + ".selection.json");
}
fs::path Layout::soft_labels(const std::string& validator, Scenario scenario) const {
  return root / "soft_labels" / (run_stem(validator, scenario) + ".jsonl");
}

Layout resolve(Config& config, const fs::path& workdir) {
  auto abs = [&](fs::path& p) {
    if (!p.empty() && p.is_relative()) p = workdir / p;
  };
  abs(config.corpus);
  abs(config.reference);
  abs(config.out_dir);
  for (std::string* spec : {&config.metrics.tagger, &config.metrics.embeddings}) {
    if (*spec != "rules" && *spec != "none" && *spec != "gateway") {
      fs::path p = *spec;
      abs(p);
      *spec = p.string();
    }
  }
  return Layout{config.out_dir, workdir};
}

std::unique_ptr<llm::Gateway> make_gateway(const Config& config,
                                           const Layout& layout,
                                           const GatewayOptions& options) {
  std::unique_ptr<llm::Backend> backend;
  if (options.mock) {
    backend = llm::MockBackend::from_file(*options.mock);
  } else {
    llm::HttpConfig http;
    http.api_key = env("EVADE_API_KEY").value_or("");
    if (!config.backend.base_url.empty()) {
      http.base_url = config.backend.base_url;
    } else if (auto url = env("EVADE_BASE_URL")) {
      http.base_url = *url;
    }
    http.embedding_model = config.backend.embedding_model;
    http.retries = config.backend.retries;
    backend = std::make_unique<llm::HttpBackend>(std::move(http));
  }
  std::optional<fs::path> cache;
  if (options.use_cache) {
    if (options.cache_dir) {
      cache = *options.cache_dir / "responses.jsonl";
    } else if (auto dir = env("EVADE_CACHE_DIR")) {
      cache = fs::path(*dir) / "responses.jsonl";
    } else {
      cache = layout.cache();
    }
  }
  return std::make_unique<llm::Gateway>(std::move(backend), cache);
}

std::unique_ptr<metrics::PosTagger> make_tagger(const std::string& spec) {
  if (spec == "none") return nullptr;
  if (spec == "rules") return std::make_unique<metrics::RuleBasedTagger>();
  return std::make_unique<metrics::PrecomputedTagger>(
      metrics::PrecomputedTagger::load(spec));
}

exporter::Conventions conventions(const Config& config) {
  exporter::Conventions c;
  c.epsilon = config.calibration.epsilon;
  c.strict_gt = config.calibration.strict_gt;
  c.tau = config.calibration.tau;
  if (config.metrics.tagger == "rules") {
    c.tagger_id = metrics::RuleBasedTagger().id();
  } else if (config.metrics.tagger != "none") {
    c.tagger_id = "precomputed:" + fs::path(config.metrics.tagger).filename().string();
  }
  return c;
}

double chosen_tau(const Config& config, const Layout& layout,
                  const std::string& validator, Scenario scenario) {
  if (config.calibration.tau) return *config.calibration.tau;
  const fs::path sel = layout.selection(validator, scenario);
  if (fs::exists(sel)) {
    const auto doc = detail::read_json_file(sel);
    if (doc.contains("tau") && doc["tau"].is_number()) return doc["tau"].get<double>();
  }
  return 0.5;
}

Stage generate(const Config& config, const Layout& layout, llm::Gateway& gateway) {
  Corpus corpus = load_corpus(config.corpus);
  ordered_json models = ordered_json::array();
  ordered_json cache = ordered_json::array();
  for (const auto& model : config.generation.models) {
    generator::GenerationConfig g;
    g.model_id = model;
    g.relationship_phrases = config.generation.relationship_phrases;
    g.decoding = config.generation.decoding;
    g.workers = config.workers;
    spdlog::info("generate: {} over {} instances", model, corpus.size());
    auto result = generator::generate_corpus(corpus, g, gateway);
    corpus = std::move(result.corpus);
    models.push_back(result.manifest.to_json(false));
    cache.push_back({{"model", model}, {"cache", cache_json(result.manifest.cache)}});
  }
  write_corpus(corpus, layout.generated());
  write_manifest(layout.generated(), {{"models", cache}});
  return {"generation",
          {{"instances", corpus.size()},
           {"explanations", corpus.explanation_count()},
           {"models", models}}};
}

Stage filter(const Config& config, const Layout& layout) {
  const Corpus corpus = load_corpus(layout.generated());
  auto result = filter::filter_corpus(corpus, config.filter);
  write_corpus(result.corpus, layout.filtered());
  auto report = result.report.to_json();
  detail::write_text_file(layout.filter_report(), detail::dump_pretty(report));
  return {"filter", report};
}

Stage validate(const Config& config, const Layout& layout, llm::Gateway& gateway) {
  const Corpus corpus = load_corpus(layout.filtered());
  ordered_json runs = ordered_json::array();
  for (const auto& spec : run_specs(config)) {
    validator::ValidateOptions opt;
    opt.validator_model = spec.validator;
    opt.scenario = spec.scenario;
    opt.targets = targets_for(config, spec.validator);
    opt.decoding = config.validation.decoding;
    opt.parse_retries = config.validation.parse_retries;
    opt.workers = config.workers;
    spdlog::info("validate: {} {}", spec.validator, validator::to_string(spec.scenario));
    auto result = validator::validate_corpus(corpus, opt, gateway);
    const fs::path path = layout.run(spec.validator, spec.scenario);
    result.run.save(path);
    write_manifest(path, {{"cache", cache_json(result.cache)}});
    ordered_json summary;
    summary["validator"] = spec.validator;
    summary["scenario"] = std::string(validator::to_string(spec.scenario));
    summary["targets"] = result.run.targets;
    summary["targeted"] = result.run.targeted();
    summary["scored"] = result.run.scores.size();
    summary["missing"] = result.run.missing.size();
    summary["requests"] = result.run.requests;
    runs.push_back(std::move(summary));
  }
  return {"validation", {{"runs", runs}}};
}

Stage calibrate(const Config& config, const Layout& layout) {
  const Corpus corpus = load_corpus(layout.filtered());
  const auto reference = load_reference_if_set(config);
  const auto gold = label_sets(corpus, SourceFilter::parse(config.calibration.gold));
  calibrator::SweepOptions sweep_opt;
  if (!config.calibration.grid.empty()) sweep_opt.grid = config.calibration.grid;
  sweep_opt.epsilon = config.calibration.epsilon;
  sweep_opt.strict_gt = config.calibration.strict_gt;
  const calibrator::SelectionPolicy policy{config.calibration.kld_slack};

  ordered_json runs = ordered_json::array();
  for (const auto& spec : run_specs(config)) {
    const auto run = validator::ValidationRun::load(layout.run(spec.validator, spec.scenario));
    ordered_json entry;
    entry["validator"] = spec.validator;
    entry["scenario"] = std::string(validator::to_string(spec.scenario));
    if (run.targeted() == 0) {
      entry["skipped"] = "run has no targeted explanations";
      runs.push_back(std::move(entry));
      continue;
    }
    const auto rows = calibrator::sweep(run, gold, reference.value_or(ReferenceMap{}),
                                        sweep_opt);
    detail::write_text_file(layout.sweep_csv(spec.validator, spec.scenario),
                            calibrator::sweep_to_csv(rows));
    ordered_json selection;
    try {
      selection = calibrator::select_threshold(rows, policy).to_json(policy);
    } catch (const DataError& e) {
      selection = {{"tau", nullptr}, {"error", e.what()}};
    }
    detail::write_text_file(layout.selection(spec.validator, spec.scenario),
                            detail::dump_pretty(selection));
    entry["sweep"] = calibrator::sweep_to_json(rows);
    entry["selection"] = selection;
    entry["tau"] = chosen_tau(config, layout, spec.validator, spec.scenario);
    runs.push_back(std::move(entry));
  }
  return {"calibration", {{"reference", reference ? reference->size() : 0},
                          {"gold", config.calibration.gold},
                          {"runs", runs}}};
}

Stage detect_errors(const Config& config, const Layout& layout) {
  ordered_json runs = ordered_json::array();
  for (const auto& spec : run_specs(config)) {
    const auto run = validator::ValidationRun::load(layout.run(spec.validator, spec.scenario));
    const double tau = chosen_tau(config, layout, spec.validator, spec.scenario);
    const auto verdicts =
        validator::detect_errors(run, tau, config.calibration.strict_gt);
    detail::write_text_file(
        layout.verdicts(spec.validator, spec.scenario),
        detail::dump_pretty(
            validator::verdicts_to_json(verdicts, tau, config.calibration.strict_gt)));
    runs.push_back({{"validator", spec.validator},
                    {"scenario", std::string(validator::to_string(spec.scenario))},
                    {"tau", tau},
                    {"counts", verdict_counts(verdicts)}});
  }
  return {"errors", {{"runs", runs}}};
}

nlohmann::ordered_json metrics_report(const Corpus& corpus,
                                      const std::optional<ReferenceMap>& reference,
                                      const std::vector<ScoredRun>& scored,
                                      const Config& config, llm::Gateway* gateway) {
  const auto gold = label_sets(corpus, SourceFilter::parse(config.calibration.gold));
  const auto gold_err = exporter::gold_errors(corpus);
  const auto tagger = make_tagger(config.metrics.tagger);
  std::shared_ptr<llm::EmbeddingTable> table;
  const metrics::EmbedFn embed = make_embed(config, gateway, table);

  // Models present in the corpus, in first-seen order.
  std::vector<std::string> models;
  for (const auto& inst : corpus.instances()) {
    for (const auto& e : inst.explanations) {
      if (e.source.is_model() &&
          std::find(models.begin(), models.end(), e.source.id) == models.end()) {
        models.push_back(e.source.id);
      }
    }
  }

  ordered_json out;
  ordered_json stats;
  std::vector<std::string> filters = {"human", "human-valid"};
  for (const auto& m : models) filters.push_back("model:" + m);
  for (const auto& f : filters) {
    stats[f] = metrics::generation_stats(corpus, SourceFilter::parse(f)).to_json();
  }
  out["generation_stats"] = stats;

  ordered_json runs = ordered_json::array();
  for (const auto& [run, tau] : scored) {
    ordered_json entry;
    entry["validator"] = run.validator_model;
    entry["scenario"] = std::string(validator::to_string(run.scenario));
    entry["targets"] = run.targets;
    entry["tau"] = tau;
    if (run.scores.empty()) {
      entry["skipped"] = "run has no scores";
      runs.push_back(std::move(entry));
      continue;
    }
    entry["validation_stats"] = metrics::validation_stats(run).to_json();
    const Corpus kept =
        exporter::keep_validated(corpus, run, tau, config.calibration.strict_gt);
    entry["post_validation_stats"] =
        metrics::generation_stats(kept, SourceFilter::parse(run.targets)).to_json();

    calibrator::SweepOptions at_tau;
    at_tau.grid = {tau};
    at_tau.epsilon = config.calibration.epsilon;
    at_tau.strict_gt = config.calibration.strict_gt;
    const auto row =
        calibrator::sweep(run, gold, reference.value_or(ReferenceMap{}), at_tau).front();
    entry["kld"] = nullable(row.kld_mean);
    entry["kld_instances"] = row.kld_instances;
    entry["precision"] = nullable(row.precision);
    entry["recall"] = nullable(row.recall);

    const auto ranking = validator::error_ranking(run);
    if (!gold_err.empty() && !ranking.empty()) {
      const std::size_t k = config.metrics.top_k;
      entry["ranking"] = {
          {"gold_errors", gold_err.size()},
          {"ranked", ranking.size()},
          {"ap", metrics::average_precision(ranking, gold_err)},
          {fmt::format("p@{}", k), metrics::precision_at_k(ranking, gold_err, k)},
          {fmt::format("r@{}", k), metrics::recall_at_k(ranking, gold_err, k)}};
    }
    runs.push_back(std::move(entry));
  }
  out["runs"] = runs;

  metrics::SimilarityConfig sim;
  sim.ngram_orders = config.metrics.ngram_orders;
  sim.tagger = tagger.get();
  sim.embed = embed;
  sim.workers = config.workers;
  ordered_json similarity = ordered_json::array();
  auto add_regime = [&](metrics::Regime regime, std::optional<std::string> model) {
    sim.model = std::move(model);
    try {
      similarity.push_back(metrics::regime_similarity(corpus, regime, sim).to_json());
    } catch (const DataError& e) {
      ordered_json skipped;
      skipped["regime"] = std::string(metrics::to_string(regime));
      if (sim.model) skipped["model"] = *sim.model;
      skipped["skipped"] = e.what();
      similarity.push_back(std::move(skipped));
    }
  };
  add_regime(metrics::Regime::kWithinHuman, std::nullopt);
  for (const auto& m : models) {
    add_regime(metrics::Regime::kWithinLlm, m);
    add_regime(metrics::Regime::kLlmVsHuman, m);
  }
  out["similarity"] = similarity;
  return out;
}

Stage compute_metrics(const Config& config, const Layout& layout,
                      llm::Gateway* gateway) {
  const Corpus corpus = load_corpus(layout.filtered());
  std::vector<ScoredRun> runs;
  for (const auto& spec : run_specs(config)) {
    runs.push_back({validator::ValidationRun::load(layout.run(spec.validator, spec.scenario)),
                    chosen_tau(config, layout, spec.validator, spec.scenario)});
  }
  auto out = metrics_report(corpus, load_reference_if_set(config), runs, config, gateway);
  detail::write_text_file(layout.metrics(), detail::dump_pretty(out));
  return {"metrics", out};
}

Stage export_labels(const Config& config, const Layout& layout) {
  const Corpus corpus = load_corpus(layout.filtered());
  ordered_json runs = ordered_json::array();
  for (const auto& spec : run_specs(config)) {
    const auto run = validator::ValidationRun::load(layout.run(spec.validator, spec.scenario));
    const double tau = chosen_tau(config, layout, spec.validator, spec.scenario);
    const auto validated =
        validator::validated_labels(run, tau, config.calibration.strict_gt);
    const auto manifest = exporter::export_soft_labels(
        corpus, validated, layout.soft_labels(spec.validator, spec.scenario));
    auto entry = manifest.to_json();
    entry["validator"] = spec.validator;
    entry["scenario"] = std::string(validator::to_string(spec.scenario));
    entry["tau"] = tau;
    runs.push_back(std::move(entry));
  }
  return {"export", {{"runs", runs}}};
}

Stage prune(const Config& config, const Layout& layout, llm::Gateway& gateway) {
  if (!config.prune) return {"prune", {{"skipped", "no prune section"}}};
  const PruneSection& p = *config.prune;
  const Corpus corpus = load_corpus(config.corpus);

  validator::ValidateOptions opt;
  opt.validator_model = p.validator;
  opt.scenario = p.scenario;
  opt.targets = SourceFilter::human();
  opt.decoding = config.validation.decoding;
  opt.parse_retries = config.validation.parse_retries;
  opt.workers = config.workers;
  auto result = validator::validate_corpus(corpus, opt, gateway);
  const fs::path run_path = layout.root / "prune" / "run.json";
  result.run.save(run_path);
  write_manifest(run_path, {{"cache", cache_json(result.cache)}});

  const double tau = p.tau.value_or(
      config.calibration.tau.value_or(0.5));
  const auto verdicts =
      validator::detect_errors(result.run, tau, config.calibration.strict_gt);
  detail::write_text_file(
      layout.root / "prune" / "verdicts.json",
      detail::dump_pretty(
          validator::verdicts_to_json(verdicts, tau, config.calibration.strict_gt)));
  exporter::PruneSummary summary;
  const Corpus pruned = exporter::prune_corpus(corpus, verdicts, &summary);
  write_corpus(pruned, layout.pruned());

  const SourceFilter human = SourceFilter::human();
  return {"prune",
          {{"validator", p.validator},
           {"scenario", std::string(validator::to_string(p.scenario))},
           {"tau", tau},
           {"counts", verdict_counts(verdicts)},
           {"labels_removed", summary.labels_removed},
           {"explanations_removed", summary.explanations_removed},
           {"instances_emptied", summary.instances_emptied},
           {"before", metrics::generation_stats(corpus, human).to_json()},
           {"after", metrics::generation_stats(pruned, human).to_json()}}};
}

exporter::Report run_pipeline(const Config& config, const Layout& layout,
                              llm::Gateway& gateway) {
  exporter::Report report(conventions(config));
  // Paths relative to the workdir keep the report independent of where the
  // experiment directory lives.
  Config shown = config;
  for (fs::path* p : {&shown.corpus, &shown.reference, &shown.out_dir}) {
    if (!p->empty() && !layout.workdir.empty()) *p = p->lexically_relative(layout.workdir);
  }
  report.add("config", shown.to_json());
  auto add = [&](Stage stage) { report.add(stage.name, std::move(stage.summary)); };
  add(generate(config, layout, gateway));
  add(filter(config, layout));
  if (!config.validation.validators.empty()) {
    add(validate(config, layout, gateway));
    add(calibrate(config, layout));
    add(detect_errors(config, layout));
  }
  add(compute_metrics(config, layout, &gateway));
  if (config.prune) add(prune(config, layout, gateway));
  if (!config.validation.validators.empty()) add(export_labels(config, layout));
  report.write(layout.report());
  return report;
}

}  // namespace evade::pipeline
