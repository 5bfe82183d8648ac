// evade: command-line front end for the explanation validation pipeline.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "evade/calibrator.hpp"
#include "evade/config.hpp"
#include "evade/corpus.hpp"
#include "evade/error.hpp"
#include "evade/exporter.hpp"
#include "evade/filter.hpp"
#include "evade/generator.hpp"
#include "evade/metrics.hpp"
#include "evade/pipeline.hpp"
#include "evade/validator.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitData = 1;
constexpr int kExitTransport = 2;
constexpr int kExitUsage = 64;

struct Common {
  std::string config_path;
  std::string workdir;  // empty: current directory
  std::string mock;
  std::string cache_dir;
  bool no_cache = false;
  std::size_t workers = 0;
  bool verbose = false;
};

struct Files {
  std::string in, out, report, run, ref, gold, verdicts, selection;
  std::vector<std::string> runs;
  std::vector<std::string> models;
  std::string validator, scenario = "one-expl", targets, gold_filter = "human-valid";
  std::string source = "human", tagger, embeddings;
  std::optional<double> tau;
  double slack = -1.0;
  bool strict = false;
};

fs::path workdir(const Common& c) {
  return c.workdir.empty() ? fs::path(".") : fs::path(c.workdir);
}

fs::path in_workdir(const Common& c, const std::string& p) {
  fs::path path = p;
  return path.is_relative() ? workdir(c) / path : path;
}

// Paths inside a config file are relative to that file unless --workdir
// says otherwise.
fs::path config_base(const Common& c) {
  if (!c.workdir.empty() || c.config_path.empty()) return workdir(c);
  const fs::path parent = fs::absolute(in_workdir(c, c.config_path)).parent_path();
  return parent.lexically_normal();
}

evade::Config load_config(const Common& c) {
  evade::Config config;
  if (!c.config_path.empty()) config = evade::Config::load(in_workdir(c, c.config_path));
  if (c.workers > 0) config.workers = c.workers;
  return config;
}

std::unique_ptr<evade::llm::Gateway> gateway_for(const Common& c,
                                                 const evade::Config& config,
                                                 const evade::pipeline::Layout& layout,
                                                 bool explicit_mode) {
  evade::pipeline::GatewayOptions opt;
  if (!c.mock.empty()) opt.mock = in_workdir(c, c.mock);
  opt.use_cache = !c.no_cache;
  if (!c.cache_dir.empty()) {
    opt.cache_dir = in_workdir(c, c.cache_dir);
  } else if (explicit_mode && std::getenv("EVADE_CACHE_DIR") == nullptr) {
    opt.cache_dir = workdir(c) / ".evade-cache";
  }
  return evade::pipeline::make_gateway(config, layout, opt);
}

void print_json(const ordered_json& j) { std::cout << j.dump(2) << "\n"; }

void write_json(const fs::path& path, const ordered_json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw evade::DataError(fmt::format("cannot open '{}' for writing", path.string()));
  out << j.dump(2) << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw evade::DataError(fmt::format("cannot open '{}' for writing", path.string()));
  out << text;
}

void require(const std::string& value, const char* flag, const char* verb) {
  if (value.empty()) {
    throw CLI::ValidationError(fmt::format("{} needs {} (or --config)", verb, flag));
  }
}

std::map<std::string, evade::LabelSet> gold_sets(const Common& c, const Files& f) {
  const evade::Corpus gold = evade::load_corpus(in_workdir(c, f.gold));
  return evade::label_sets(gold, evade::SourceFilter::parse(f.gold_filter));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explanation-based annotation validation toolkit", "evade"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "evade 0.1.0");

  Common common;
  Files files;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "JSON config document");
    cmd->add_option("--workdir", common.workdir,
                    "Base directory for relative paths (config paths default to "
                    "the config file's directory)");
    cmd->add_option("--mock", common.mock, "Scripted backend responses (JSONL)");
    cmd->add_option("--cache-dir", common.cache_dir, "Response cache directory");
    cmd->add_flag("--no-cache", common.no_cache, "Bypass the response cache");
    cmd->add_option("--workers", common.workers, "Worker threads (default from config)");
    cmd->add_flag("-v,--verbose", common.verbose, "Debug logging");
  };

  auto* gen = app.add_subcommand("generate", "Generate model explanations");
  add_common(gen);
  gen->add_option("--in", files.in, "Input corpus");
  gen->add_option("--out", files.out, "Output corpus");
  gen->add_option("--model", files.models, "Model id (repeatable)");

  auto* filt = app.add_subcommand("filter", "Drop fallback, foreign-script and truncated items");
  add_common(filt);
  filt->add_option("--in", files.in, "Input corpus");
  filt->add_option("--out", files.out, "Filtered corpus");
  filt->add_option("--report", files.report, "Removal report (JSON)");

  auto* val = app.add_subcommand("validate", "Score explanations with a validator model");
  add_common(val);
  val->add_option("--in", files.in, "Input corpus");
  val->add_option("--out", files.out, "Validation run (JSON)");
  val->add_option("--validator", files.validator, "Validator model id");
  val->add_option("--scenario", files.scenario, "one-expl, one-llm or all-llm");
  val->add_option("--targets", files.targets, "Explanations to score (source filter)");

  auto* det = app.add_subcommand("detect-errors", "Flag labels without a validated explanation");
  add_common(det);
  det->add_option("--run", files.run, "Validation run (JSON)");
  det->add_option("--tau", files.tau, "Validation threshold");
  det->add_flag("--strict", files.strict, "Validate only scores strictly above tau");
  det->add_option("--out", files.out, "Verdicts (JSON)");

  auto* cal = app.add_subcommand("calibrate", "Sweep thresholds and select one");
  add_common(cal);
  cal->add_option("--run", files.run, "Validation run (JSON)");
  cal->add_option("--gold", files.gold, "Corpus providing gold label sets");
  cal->add_option("--gold-filter", files.gold_filter, "Source filter for gold labels");
  cal->add_option("--ref", files.ref, "Reference label distributions");
  cal->add_option("--out", files.out, "Sweep CSV");
  cal->add_option("--selection", files.selection, "Selection record (JSON)");
  cal->add_option("--slack", files.slack, "KLD slack for selection");
  cal->add_flag("--strict", files.strict, "Validate only scores strictly above tau");

  auto* met = app.add_subcommand("metrics", "Corpus, validation and similarity metrics");
  add_common(met);
  met->add_option("--in", files.in, "Corpus");
  met->add_option("--ref", files.ref, "Reference label distributions");
  met->add_option("--run", files.runs, "Validation run (repeatable)");
  met->add_option("--tau", files.tau, "Threshold applied to every run");
  met->add_option("--tagger", files.tagger, "rules, none, or a tags JSONL");
  met->add_option("--embeddings", files.embeddings, "none, gateway, or a vectors JSONL");
  met->add_option("--report", files.report, "Report (JSON)");

  auto* pr = app.add_subcommand("prune", "Remove erroneous labels from a corpus");
  add_common(pr);
  pr->add_option("--in", files.in, "Corpus");
  pr->add_option("--verdicts", files.verdicts, "Verdicts (JSON)");
  pr->add_option("--out", files.out, "Pruned corpus");

  auto* exp = app.add_subcommand("export", "Write soft-label training data");
  add_common(exp);
  exp->add_option("--in", files.in, "Corpus");
  exp->add_option("--run", files.run, "Validation run (JSON)");
  exp->add_option("--tau", files.tau, "Validation threshold");
  exp->add_flag("--strict", files.strict, "Validate only scores strictly above tau");
  exp->add_option("--out", files.out, "Training JSONL");

  auto* st = app.add_subcommand("stats", "Explanation statistics");
  add_common(st);
  st->add_option("--in", files.in, "Corpus")->required();
  st->add_option("--source", files.source, "Source filter (default human)");

  auto* pipe = app.add_subcommand("pipeline", "Run every configured stage");
  add_common(pipe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("evade"));
  spdlog::set_pattern("%^%l%$: %v");
  spdlog::set_level(common.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    evade::Config config = load_config(common);
    const bool staged = !common.config_path.empty();
    evade::pipeline::Layout layout = evade::pipeline::resolve(config, config_base(common));
    const auto strict = [&] { return files.strict || config.calibration.strict_gt; };

    if (*pipe) {
      if (!staged) throw CLI::ValidationError("pipeline needs --config");
      auto gateway = gateway_for(common, config, layout, false);
      evade::pipeline::run_pipeline(config, layout, *gateway);
      spdlog::info("report written to {}", layout.report().string());
      return 0;
    }

    if (*gen) {
      if (staged && files.in.empty()) {
        auto gateway = gateway_for(common, config, layout, false);
        print_json(evade::pipeline::generate(config, layout, *gateway).summary);
        return 0;
      }
      require(files.in, "--in", "generate");
      require(files.out, "--out", "generate");
      if (files.models.empty()) throw CLI::ValidationError("generate needs --model");
      auto gateway = gateway_for(common, config, layout, true);
      evade::Corpus corpus = evade::load_corpus(in_workdir(common, files.in));
      ordered_json manifests = ordered_json::array();
      for (const auto& model : files.models) {
        evade::generator::GenerationConfig g;
        g.model_id = model;
        g.relationship_phrases = config.generation.relationship_phrases;
        g.decoding = config.generation.decoding;
        g.workers = config.workers;
        auto result = evade::generator::generate_corpus(corpus, g, *gateway);
        corpus = std::move(result.corpus);
        manifests.push_back(result.manifest.to_json(true));
      }
      const fs::path out = in_workdir(common, files.out);
      evade::write_corpus(corpus, out);
      write_json(out.string() + ".manifest.json", manifests);
      return 0;
    }

    if (*filt) {
      if (staged && files.in.empty()) {
        print_json(evade::pipeline::filter(config, layout).summary);
        return 0;
      }
      require(files.in, "--in", "filter");
      require(files.out, "--out", "filter");
      auto result = evade::filter::filter_corpus(
          evade::load_corpus(in_workdir(common, files.in)), config.filter);
      evade::write_corpus(result.corpus, in_workdir(common, files.out));
      if (!files.report.empty()) {
        write_json(in_workdir(common, files.report), result.report.to_json());
      }
      return 0;
    }

    if (*val) {
      if (staged && files.in.empty()) {
        auto gateway = gateway_for(common, config, layout, false);
        print_json(evade::pipeline::validate(config, layout, *gateway).summary);
        return 0;
      }
      require(files.in, "--in", "validate");
      require(files.out, "--out", "validate");
      require(files.validator, "--validator", "validate");
      auto gateway = gateway_for(common, config, layout, true);
      evade::validator::ValidateOptions opt;
      opt.validator_model = files.validator;
      opt.scenario = evade::validator::parse_scenario(files.scenario);
      if (!files.targets.empty()) opt.targets = evade::SourceFilter::parse(files.targets);
      opt.decoding = config.validation.decoding;
      opt.parse_retries = config.validation.parse_retries;
      opt.workers = config.workers;
      auto result = evade::validator::validate_corpus(
          evade::load_corpus(in_workdir(common, files.in)), opt, *gateway);
      const fs::path out = in_workdir(common, files.out);
      result.run.save(out);
      write_json(out.string() + ".manifest.json",
                 {{"requests", result.cache.requests},
                  {"cache_hits", result.cache.cache_hits},
                  {"backend_calls", result.cache.backend_calls}});
      return 0;
    }

    if (*det) {
      if (staged && files.run.empty()) {
        print_json(evade::pipeline::detect_errors(config, layout).summary);
        return 0;
      }
      require(files.run, "--run", "detect-errors");
      if (!files.tau) throw CLI::ValidationError("detect-errors needs --tau");
      const auto run = evade::validator::ValidationRun::load(in_workdir(common, files.run));
      const auto verdicts = evade::validator::detect_errors(run, *files.tau, strict());
      const auto doc = evade::validator::verdicts_to_json(verdicts, *files.tau, strict());
      if (files.out.empty()) {
        print_json(doc);
      } else {
        write_json(in_workdir(common, files.out), doc);
      }
      return 0;
    }

    if (*cal) {
      if (staged && files.run.empty()) {
        print_json(evade::pipeline::calibrate(config, layout).summary);
        return 0;
      }
      require(files.run, "--run", "calibrate");
      require(files.gold, "--gold", "calibrate");
      require(files.ref, "--ref", "calibrate");
      require(files.out, "--out", "calibrate");
      const auto run = evade::validator::ValidationRun::load(in_workdir(common, files.run));
      evade::calibrator::SweepOptions opt;
      if (!config.calibration.grid.empty()) opt.grid = config.calibration.grid;
      opt.epsilon = config.calibration.epsilon;
      opt.strict_gt = strict();
      const auto rows = evade::calibrator::sweep(
          run, gold_sets(common, files),
          evade::load_reference(in_workdir(common, files.ref)), opt);
      const fs::path out = in_workdir(common, files.out);
      write_text(out, evade::calibrator::sweep_to_csv(rows));
      evade::calibrator::SelectionPolicy policy{
          files.slack >= 0.0 ? files.slack : config.calibration.kld_slack};
      const auto selection = evade::calibrator::select_threshold(rows, policy);
      const fs::path sel = files.selection.empty()
                               ? fs::path(out.string() + ".selection.json")
                               : in_workdir(common, files.selection);
      write_json(sel, selection.to_json(policy));
      std::cout << fmt::format("selected tau {:.2f}\n", selection.tau);
      return 0;
    }

    if (*met) {
      if (staged && files.in.empty()) {
        auto gateway = gateway_for(common, config, layout, false);
        evade::pipeline::compute_metrics(config, layout, gateway.get());
        spdlog::info("metrics written to {}", layout.metrics().string());
        return 0;
      }
      require(files.in, "--in", "metrics");
      if (!files.tagger.empty()) {
        config.metrics.tagger = files.tagger == "rules" || files.tagger == "none"
                                    ? files.tagger
                                    : in_workdir(common, files.tagger).string();
      }
      std::unique_ptr<evade::llm::Gateway> gateway;
      if (!files.embeddings.empty()) {
        config.metrics.embeddings = files.embeddings == "gateway" || files.embeddings == "none"
                                        ? files.embeddings
                                        : in_workdir(common, files.embeddings).string();
      }
      if (config.metrics.embeddings == "gateway") {
        gateway = gateway_for(common, config, layout, true);
      }
      std::optional<evade::ReferenceMap> reference;
      if (!files.ref.empty()) reference = evade::load_reference(in_workdir(common, files.ref));
      std::vector<evade::pipeline::ScoredRun> runs;
      for (const auto& r : files.runs) {
        runs.push_back({evade::validator::ValidationRun::load(in_workdir(common, r)),
                        files.tau.value_or(config.calibration.tau.value_or(0.5))});
      }
      config.calibration.strict_gt = strict();
      evade::exporter::Report report(evade::pipeline::conventions(config));
      report.add("metrics",
                 evade::pipeline::metrics_report(evade::load_corpus(in_workdir(common, files.in)),
                                                 reference, runs, config, gateway.get()));
      if (files.report.empty()) {
        std::cout << report.dump();
      } else {
        report.write(in_workdir(common, files.report));
      }
      return 0;
    }

    if (*pr) {
      if (staged && files.in.empty()) {
        auto gateway = gateway_for(common, config, layout, false);
        print_json(evade::pipeline::prune(config, layout, *gateway).summary);
        return 0;
      }
      require(files.in, "--in", "prune");
      require(files.verdicts, "--verdicts", "prune");
      require(files.out, "--out", "prune");
      std::ifstream vin(in_workdir(common, files.verdicts));
      if (!vin) throw evade::DataError(fmt::format("cannot open '{}'", files.verdicts));
      nlohmann::json vdoc;
      try {
        vdoc = nlohmann::json::parse(vin);
      } catch (const nlohmann::json::exception& e) {
        throw evade::DataError(fmt::format("{}: {}", files.verdicts, e.what()));
      }
      evade::exporter::PruneSummary summary;
      const auto pruned = evade::exporter::prune_corpus(
          evade::load_corpus(in_workdir(common, files.in)),
          evade::validator::verdicts_from_json(vdoc), &summary);
      evade::write_corpus(pruned, in_workdir(common, files.out));
      print_json({{"labels_removed", summary.labels_removed},
                  {"explanations_removed", summary.explanations_removed},
                  {"instances_emptied", summary.instances_emptied}});
      return 0;
    }

    if (*exp) {
      if (staged && files.in.empty()) {
        print_json(evade::pipeline::export_labels(config, layout).summary);
        return 0;
      }
      require(files.in, "--in", "export");
      require(files.run, "--run", "export");
      require(files.out, "--out", "export");
      if (!files.tau) throw CLI::ValidationError("export needs --tau");
      const auto run = evade::validator::ValidationRun::load(in_workdir(common, files.run));
      const auto manifest = evade::exporter::export_soft_labels(
          evade::load_corpus(in_workdir(common, files.in)),
          evade::validator::validated_labels(run, *files.tau, strict()),
          in_workdir(common, files.out));
      write_json(in_workdir(common, files.out).string() + ".manifest.json", manifest.to_json());
      print_json(manifest.to_json());
      return 0;
    }

    if (*st) {
      const auto corpus = evade::load_corpus(in_workdir(common, files.in));
      auto stats = evade::metrics::generation_stats(
          corpus, evade::SourceFilter::parse(files.source));
      auto doc = stats.to_json();
      doc["source"] = files.source;
      print_json(doc);
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const evade::TransportError& e) {
    spdlog::error("{}", e.what());
    return kExitTransport;
  } catch (const evade::DataError& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  }
  return kExitUsage;
}
