#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evade/calibrator.hpp"
#include "evade/config.hpp"
#include "evade/corpus.hpp"
#include "evade/exporter.hpp"
#include "evade/gateway.hpp"
#include "evade/tagger.hpp"
#include "evade/validator.hpp"

namespace evade::pipeline {

// Where each stage writes, relative to the resolved output directory.
struct Layout {
  std::filesystem::path root;
  std::filesystem::path workdir;

  std::filesystem::path generated() const { return root / "generated.jsonl"; }
  std::filesystem::path filtered() const { return root / "filtered.jsonl"; }
  std::filesystem::path filter_report() const { return root / "filter_report.json"; }
  std::filesystem::path run(const std::string& validator,
                            validator::Scenario scenario) const;
  std::filesystem::path verdicts(const std::string& validator,
                                 validator::Scenario scenario) const;
  std::filesystem::path sweep_csv(const std::string& validator,
                                  validator::Scenario scenario) const;
  std::filesystem::path selection(const std::string& validator,
                                  validator::Scenario scenario) const;
  std::filesystem::path soft_labels(const std::string& validator,
                                    validator::Scenario scenario) const;
  std::filesystem::path pruned() const { return root / "pruned.jsonl"; }
  std::filesystem::path metrics() const { return root / "metrics.json"; }
  std::filesystem::path report() const { return root / "report.json"; }
  std::filesystem::path cache() const { return root / "cache" / "responses.jsonl"; }
};

struct GatewayOptions {
  std::optional<std::filesystem::path> mock;  // scripted backend
  std::optional<std::filesystem::path> cache_dir;  // else EVADE_CACHE_DIR
  bool use_cache = true;
};

// Mock backend when a script is given; otherwise the HTTP backend configured
// from EVADE_API_KEY / EVADE_BASE_URL (throws TransportError without a key).
std::unique_ptr<llm::Gateway> make_gateway(const Config& config,
                                           const Layout& layout,
                                           const GatewayOptions& options);

// "rules", "none" (nullptr), or a precomputed tags file.
std::unique_ptr<metrics::PosTagger> make_tagger(const std::string& spec);

// Resolves config paths against the working directory.
Layout resolve(Config& config, const std::filesystem::path& workdir);

struct Stage {
  std::string name;
  nlohmann::ordered_json summary;  // report section, cache-free
};

// Stages read their inputs from the layout and write their artifacts there,
// so running them one by one equals running the pipeline.
Stage generate(const Config& config, const Layout& layout, llm::Gateway& gateway);
Stage filter(const Config& config, const Layout& layout);
Stage validate(const Config& config, const Layout& layout, llm::Gateway& gateway);
Stage calibrate(const Config& config, const Layout& layout);
Stage detect_errors(const Config& config, const Layout& layout);
Stage compute_metrics(const Config& config, const Layout& layout,
                      llm::Gateway* gateway);
Stage export_labels(const Config& config, const Layout& layout);
Stage prune(const Config& config, const Layout& layout, llm::Gateway& gateway);

struct ScoredRun {
  validator::ValidationRun run;
  double tau = 0.5;
};

// Corpus statistics, per-run validation metrics and similarity regimes.
nlohmann::ordered_json metrics_report(const Corpus& corpus,
                                      const std::optional<ReferenceMap>& reference,
                                      const std::vector<ScoredRun>& runs,
                                      const Config& config, llm::Gateway* gateway);

// Runs every configured stage in order and writes the report; returns it.
exporter::Report run_pipeline(const Config& config, const Layout& layout,
                              llm::Gateway& gateway);

exporter::Conventions conventions(const Config& config);

// The calibrated threshold for a run, falling back to the config's fixed
// tau and then to 0.5.
double chosen_tau(const Config& config, const Layout& layout,
                  const std::string& validator, validator::Scenario scenario);

}  // namespace evade::pipeline
