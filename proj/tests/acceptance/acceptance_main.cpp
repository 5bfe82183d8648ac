// Acceptance checks: one PASS/FAIL line per criterion.
//
//   evade_acceptance             every criterion; exit 1 on any FAIL
//   evade_acceptance --offline   all but the ones needing external data
//   evade_acceptance --only X    a single criterion
//
// A criterion that cannot run because its data is absent still prints FAIL.
// When that is the only kind of failure the exit code is 77 so ctest can
// tell "not runnable here" from "wrong".

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "evade/calibrator.hpp"
#include "evade/corpus.hpp"
#include "evade/error.hpp"
#include "evade/exporter.hpp"
#include "evade/metrics.hpp"
#include "evade/pipeline.hpp"
#include "evade/tagger.hpp"
#include "evade/validator.hpp"

namespace {

namespace fs = std::filesystem;
using namespace evade;

struct Outcome {
  bool pass = false;
  std::string detail;
  bool unavailable = false;  // required data missing
};

// Collects failed checks; the first few make it into the detail line.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) messages_.push_back(what);
  }
  void near(double got, double want, double tol, const std::string& what) {
    expect(std::fabs(got - want) <= tol,
           fmt::format("{}: got {:.12g}, want {:.12g} +/- {:g}", what, got, want, tol));
  }
  Outcome outcome(std::string summary) const {
    Outcome o;
    o.pass = failures_ == 0;
    if (o.pass) {
      o.detail = std::move(summary);
    } else {
      o.detail = fmt::format("{}/{} checks failed", failures_, checks_);
      for (const auto& m : messages_) o.detail += "; " + m;
    }
    return o;
  }
  std::size_t checks() const { return checks_; }

 private:
  std::size_t checks_ = 0;
  std::size_t failures_ = 0;
  std::vector<std::string> messages_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / fmt::format("evade-acceptance-{}{}", rd(), rd());
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

Outcome varierr_stats() {
  const char* env = std::getenv("EVADE_VARIERR_PATH");
  if (env == nullptr || !fs::exists(env)) {
    Outcome o;
    o.unavailable = true;
    o.detail = env == nullptr
                   ? "EVADE_VARIERR_PATH is not set; the public VariErr release is not "
                     "available in this environment"
                   : fmt::format("EVADE_VARIERR_PATH={} does not exist", env);
    return o;
  }
  Checker c;
  const auto t0 = std::chrono::steady_clock::now();
  const Corpus corpus = load_corpus(env);
  const auto all = metrics::generation_stats(corpus, SourceFilter::human());
  const auto valid = metrics::generation_stats(corpus, SourceFilter::human_valid());
  const double elapsed = seconds_since(t0);

  c.expect(all.explanations == 1933, fmt::format("explanations {}", all.explanations));
  c.near(all.mean_words, 13.89, 0.5, "mean words");
  c.near(all.labels_per_item, 1.76, 0.02, "labels/item");
  c.near(all.explanations_per_label, 2.20, 0.03, "expl/label");
  c.expect(valid.explanations == 1712,
           fmt::format("valid explanations {}", valid.explanations));
  c.near(valid.labels_per_item, 1.50, 0.02, "valid labels/item");
  c.near(valid.explanations_per_label, 2.29, 0.03, "valid expl/label");
  c.expect(elapsed < 10.0, fmt::format("runtime {:.2f}s", elapsed));
  return c.outcome(fmt::format(
      "{} expl, {:.2f} words, {:.2f} labels/item, {:.2f} expl/label; valid {} expl, "
      "{:.2f}, {:.2f}; {:.2f}s",
      all.explanations, all.mean_words, all.labels_per_item, all.explanations_per_label,
      valid.explanations, valid.labels_per_item, valid.explanations_per_label, elapsed));
}

// ---------------------------------------------------------------------------

std::array<double, 3> random_distribution(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::array<double, 3> p{};
  // A third of the draws put exact zeros in, the case smoothing exists for.
  const bool sparse = rng() % 3 == 0;
  for (auto& x : p) x = sparse && rng() % 2 ? 0.0 : u(rng);
  if (p[0] + p[1] + p[2] == 0.0) p[rng() % 3] = 1.0;
  const double sum = p[0] + p[1] + p[2];
  for (auto& x : p) x /= sum;
  return p;
}

// Straight summation in extended precision.
long double oracle_kld(const std::array<double, 3>& p, const std::array<double, 3>& q,
                       long double eps) {
  long double sp = 0, sq = 0;
  for (int i = 0; i < 3; ++i) {
    sp += p[i] + eps;
    sq += q[i] + eps;
  }
  long double total = 0;
  for (int i = 0; i < 3; ++i) {
    const long double a = (p[i] + eps) / sp;
    const long double b = (q[i] + eps) / sq;
    total += a * std::log(a / b);
  }
  return total;
}

Outcome kld_oracle() {
  Checker c;
  std::mt19937_64 rng(20240601);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto p = random_distribution(rng);
    const auto q = random_distribution(rng);
    const double err =
        std::fabs(static_cast<long double>(metrics::kld(p, q)) - oracle_kld(p, q, 1e-4L));
    worst = std::max(worst, err);
    c.expect(err <= 1e-9, fmt::format("pair {} error {:g}", i, err));
  }
  double worst_self = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto p = random_distribution(rng);
    const double v = std::fabs(metrics::kld(p, p));
    worst_self = std::max(worst_self, v);
    c.expect(v <= 1e-12, fmt::format("kld(p,p) = {:g}", v));
  }
  return c.outcome(fmt::format("1000 pairs max error {:.2e}; 100 self max {:.2e}", worst,
                               worst_self));
}

// ---------------------------------------------------------------------------

double brute_precision_of_prefix(const std::vector<LabelKey>& ranking,
                                 const std::set<LabelKey>& gold, std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k && i < ranking.size(); ++i) {
    for (const auto& g : gold) {
      if (g == ranking[i]) ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(k);
}

Outcome ranking_oracle() {
  Checker c;
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 5 + rng() % 496;
    std::vector<LabelKey> ranking;
    for (std::size_t i = 0; i < n; ++i) {
      ranking.push_back({fmt::format("i{:04}", i), kAllLabels[rng() % 3]});
    }
    std::shuffle(ranking.begin(), ranking.end(), rng);
    std::set<LabelKey> gold;
    const std::size_t density = 1 + rng() % 10;
    for (const auto& key : ranking) {
      if (rng() % density == 0) gold.insert(key);
    }
    // Some gold errors the ranking never surfaces.
    for (std::size_t extra = rng() % 3; extra > 0; --extra) {
      gold.insert({fmt::format("unranked{}", extra), Label::kNeutral});
    }
    if (gold.empty()) gold.insert(ranking[rng() % n]);

    // AP: mean over every gold item of the precision of the prefix ending at
    // its rank, zero for unranked ones.
    double ap = 0.0;
    for (std::size_t r = 1; r <= n; ++r) {
      bool relevant = false;
      for (const auto& g : gold) relevant = relevant || g == ranking[r - 1];
      if (relevant) ap += brute_precision_of_prefix(ranking, gold, r);
    }
    ap /= static_cast<double>(gold.size());
    const double got_ap = metrics::average_precision(ranking, gold);
    worst = std::max(worst, std::fabs(got_ap - ap));
    c.near(got_ap, ap, 1e-12, fmt::format("AP trial {}", trial));

    for (std::size_t k : {std::size_t{1}, std::size_t{5}, n / 2 + 1, n, n + 7}) {
      const double p = brute_precision_of_prefix(ranking, gold, k);
      const double r = p * static_cast<double>(k) / static_cast<double>(gold.size());
      c.near(metrics::precision_at_k(ranking, gold, k), p, 1e-12,
             fmt::format("P@{} trial {}", k, trial));
      c.near(metrics::recall_at_k(ranking, gold, k), r, 1e-12,
             fmt::format("R@{} trial {}", k, trial));
    }
  }
  return c.outcome(fmt::format("200 rankings, {} checks, max AP error {:.1e}", c.checks(),
                               worst));
}

// ---------------------------------------------------------------------------

validator::ValidationRun random_run(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  validator::ValidationRun run;
  const std::size_t instances = 1 + rng() % 40;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::string id = fmt::format("i{}", i);
    for (Label l : kAllLabels) {
      if (rng() % 3 == 0) continue;
      const std::size_t k = rng() % 4;
      for (std::size_t o = 0; o < k; ++o) {
        ExplanationRef ref{id, l, Source::model("v"), o};
        // Grid-aligned scores exercise the boundary rule.
        const double s = rng() % 4 == 0 ? static_cast<double>(rng() % 11) / 10.0 : u(rng);
        if (rng() % 8 == 0) {
          run.missing.insert(ref);
        } else {
          run.scores[ref] = s;
        }
      }
    }
  }
  if (run.scores.empty()) run.scores[{"i0", Label::kEntailment, Source::model("v"), 0}] = 0.5;
  return run;
}

Outcome monotonicity() {
  Checker c;
  std::mt19937_64 rng(99);
  const auto grid = calibrator::SweepOptions::default_grid();
  for (int trial = 0; trial < 100; ++trial) {
    const auto run = random_run(rng);
    std::map<std::string, LabelSet> gold;
    for (const auto& [ref, s] : run.scores) {
      if (rng() % 2) gold[ref.instance_id].insert(ref.label);
    }
    if (gold.empty()) gold[run.scores.begin()->first.instance_id].insert(Label::kNeutral);
    const bool strict = trial % 2 == 1;

    calibrator::SweepOptions opt;
    opt.strict_gt = strict;
    const auto rows = calibrator::sweep(run, gold, {}, opt);

    std::map<std::string, LabelSet> prev;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double tau = grid[g];
      const auto validated = validator::validated_labels(run, tau, strict);
      if (g > 0) {
        for (const auto& [id, labels] : validated) {
          for (Label l : labels) {
            c.expect(prev.at(id).contains(l),
                     fmt::format("trial {} tau {}: {} {} not nested", trial, tau, id,
                                 to_string(l)));
          }
        }
        c.expect(*rows[g].recall <= *rows[g - 1].recall + 1e-15,
                 fmt::format("trial {}: recall rises at tau {}", trial, tau));
      }
      prev = validated;

      // Verdicts partition the targeted labels: valid exactly when
      // validated, erroneous when scored but not validated, undetermined
      // when nothing was scored.
      std::set<LabelKey> targeted;
      for (const auto& [ref, s] : run.scores) targeted.insert({ref.instance_id, ref.label});
      for (const auto& ref : run.missing) targeted.insert({ref.instance_id, ref.label});
      const auto verdicts = validator::detect_errors(run, tau, strict);
      std::set<LabelKey> seen;
      for (const auto& v : verdicts) {
        const LabelKey key{v.instance_id, v.label};
        c.expect(seen.insert(key).second, "duplicate verdict");
        const bool is_validated = validated.contains(v.instance_id) &&
                                  validated.at(v.instance_id).contains(v.label);
        c.expect((v.status == validator::VerdictStatus::kValid) == is_validated,
                 fmt::format("trial {} tau {}: verdict/validated disagree", trial, tau));
        c.expect((v.status == validator::VerdictStatus::kUndetermined) == (v.scored == 0),
                 "undetermined iff unscored");
      }
      c.expect(seen == targeted, fmt::format("trial {}: verdicts do not cover labels", trial));
    }
  }
  return c.outcome(fmt::format("100 runs x {} thresholds, {} checks", grid.size(), c.checks()));
}

// ---------------------------------------------------------------------------

Outcome similarity() {
  Checker c;
  const metrics::RuleBasedTagger tagger;
  static const std::vector<std::string> vocab = {
      "the", "a", "man", "woman", "dog", "is", "are", "running", "sat", "ran",
      "quickly", "outside", "park", "not", "because", "two", "children", "red",
      "Jacket", "beach", "it's", "isn't", "happy", ",", "."};
  std::mt19937_64 rng(1234);
  auto random_text = [&] {
    std::string out;
    const std::size_t n = rng() % 12;
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0) out += rng() % 5 == 0 ? "  " : " ";
      out += vocab[rng() % vocab.size()];
    }
    return out;
  };
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_vector = [&](std::size_t dim) {
    std::vector<double> v(dim);
    do {
      for (auto& x : v) x = normal(rng);
    } while (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }));
    return v;
  };
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };

  for (int i = 0; i < 500; ++i) {
    const std::string a = random_text();
    const std::string b = random_text();
    for (std::size_t n = 1; n <= 3; ++n) {
      const double ab = metrics::lexical_similarity(a, b, n);
      c.expect(ab == metrics::lexical_similarity(b, a, n), "lexical symmetry");
      c.expect(in_unit(ab), "lexical bounds");
      c.expect(metrics::lexical_similarity(a, a, n) == 1.0, "lexical self");
      const double sab = metrics::syntactic_similarity(a, b, n, tagger);
      c.expect(sab == metrics::syntactic_similarity(b, a, n, tagger), "syntactic symmetry");
      c.expect(in_unit(sab), "syntactic bounds");
      c.expect(metrics::syntactic_similarity(a, a, n, tagger) == 1.0, "syntactic self");
    }
    const std::size_t dim = 1 + rng() % 32;
    const auto u = random_vector(dim);
    const auto v = random_vector(dim);
    const auto uv = metrics::semantic_similarity(u, v);
    const auto vu = metrics::semantic_similarity(v, u);
    c.expect(uv.cosine == vu.cosine && uv.euclidean == vu.euclidean, "semantic symmetry");
    c.expect(in_unit(uv.cosine) && uv.euclidean > 0.0 && uv.euclidean <= 1.0,
             "semantic bounds");
    const auto uu = metrics::semantic_similarity(u, u);
    c.near(uu.cosine, 1.0, 1e-12, "cosine self");
    c.expect(uu.euclidean == 1.0, "euclidean self");
  }

  // Hand-enumerated n-gram sets.
  c.expect(metrics::lexical_similarity("the cat sat", "the cat ran", 1) == 0.5,
           "the cat sat / the cat ran n=1");
  c.expect(metrics::lexical_similarity("the cat sat", "the cat ran", 2) == 1.0 / 3.0,
           "the cat sat / the cat ran n=2");
  c.expect(metrics::lexical_similarity("the cat sat", "the cat ran", 3) == 0.0,
           "the cat sat / the cat ran n=3");
  c.expect(metrics::lexical_similarity("a b", "c d", 1) == 0.0, "disjoint");
  metrics::PrecomputedTagger fixed;
  fixed.add("x", {"DT", "NN", "VB"});
  fixed.add("y", {"DT", "NN", "JJ"});
  c.expect(metrics::syntactic_similarity("x", "y", 1, fixed) == 0.5, "DT NN VB / DT NN JJ");
  const std::vector<double> e1 = {1, 0}, d = {1, 1};
  const auto s = metrics::semantic_similarity(e1, d);
  c.near(s.cosine, std::sqrt(0.5), 1e-12, "cosine (1,0)/(1,1)");
  c.expect(s.euclidean == 0.5, "euclidean (1,0)/(1,1)");
  return c.outcome(fmt::format("500 text and vector pairs, {} checks", c.checks()));
}

// ---------------------------------------------------------------------------

Outcome distributions() {
  Checker c;
  using A = std::array<double, 3>;
  const auto E = Label::kEntailment, N = Label::kNeutral, C = Label::kContradiction;
  c.expect(metrics::distribution_from_labels({E, N})->values() == A{0.5, 0.5, 0.0}, "{E,N}");
  c.expect(metrics::distribution_from_labels({E})->values() == A{1, 0, 0}, "{E}");
  c.expect(metrics::distribution_from_labels({N})->values() == A{0, 1, 0}, "{N}");
  c.expect(metrics::distribution_from_labels({C})->values() == A{0, 0, 1}, "{C}");
  c.expect(metrics::distribution_from_labels({E, N, C})->values() ==
               A{1.0 / 3, 1.0 / 3, 1.0 / 3},
           "{E,N,C}");
  c.expect(!metrics::distribution_from_labels({}).has_value(), "{} has no distribution");

  // Every exported line sums to one.
  std::mt19937_64 rng(5);
  std::vector<Instance> instances;
  std::map<std::string, LabelSet> validated;
  for (int i = 0; i < 300; ++i) {
    Instance inst;
    inst.id = fmt::format("x{}", i);
    inst.premise = "p";
    inst.hypothesis = "h";
    LabelSet labels;
    for (Label l : kAllLabels) {
      if (rng() % 2) labels.insert(l);
    }
    validated[inst.id] = labels;
    instances.push_back(std::move(inst));
  }
  exporter::ExportManifest manifest;
  const std::string out = exporter::soft_labels_jsonl(Corpus(instances), validated, &manifest);
  std::istringstream lines(out);
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    const auto doc = nlohmann::json::parse(line);
    const double sum = doc["dist"]["e"].get<double>() + doc["dist"]["n"].get<double>() +
                       doc["dist"]["c"].get<double>();
    c.near(sum, 1.0, 1e-9, "exported sum");
    ++count;
  }
  c.expect(count + manifest.skipped_empty == 300, "exported + skipped = instances");
  return c.outcome(fmt::format("rule cases exact; {} exported lines normalized, {} skipped",
                               count, manifest.skipped_empty));
}

// ---------------------------------------------------------------------------

// Independently computed from the fixture script (mock.jsonl one-expl
// scores, corpus human_valid flags, reference counts).
const std::set<std::pair<std::string, std::string>> kErroneousAt08 = {
    {"p01", "contradiction"}, {"p01", "neutral"},       {"p02", "entailment"},
    {"p03", "contradiction"}, {"p04", "contradiction"}, {"p04", "neutral"},
    {"p05", "entailment"},    {"p06", "contradiction"}, {"p06", "neutral"},
    {"p07", "contradiction"}, {"p08", "entailment"},    {"p08", "neutral"},
    {"p09", "contradiction"}, {"p09", "neutral"},       {"p10", "entailment"}};

struct FrozenRow {
  double tau;
  double kld;
  double precision;
  double recall;
};

const FrozenRow kOneExplSweep[] = {
    {0.1, 0.6077122872993065, 0.4482758620689655, 1.0},
    {0.2, 0.6077122872993065, 0.4482758620689655, 1.0},
    {0.3, 0.59280543853573, 0.4642857142857143, 1.0},
    {0.4, 0.30748116100826767, 0.65, 1.0},
    {0.5, 0.2883051308769476, 0.7647058823529411, 1.0},
    {0.6, 0.37364933301396797, 0.8666666666666667, 1.0},
    {0.7, 0.4708746631200684, 0.9285714285714286, 1.0},
    {0.8, 0.4708746631200684, 0.9285714285714286, 1.0},
    {0.9, 0.9378907019254712, 1.0, 0.9230769230769231},
};

Outcome end_to_end() {
  Checker c;
  TempDir dir;
  const fs::path fixtures = EVADE_FIXTURE_DIR;
  const auto t0 = std::chrono::steady_clock::now();

  auto run_once = [&]() {
    Config config = Config::load(fixtures / "pipeline_config.json");
    config.out_dir = dir.path() / "out";
    const auto layout = pipeline::resolve(config, fixtures);
    pipeline::GatewayOptions opt;
    opt.mock = fixtures / "mock.jsonl";
    auto gateway = pipeline::make_gateway(config, layout, opt);
    pipeline::run_pipeline(config, layout, *gateway);
    return std::make_pair(layout, gateway->stats());
  };
  const auto [layout, cold] = run_once();
  const std::string first = read_file(layout.report());
  const auto [layout2, warm] = run_once();
  const std::string second = read_file(layout2.report());
  const double elapsed = seconds_since(t0);

  c.expect(first == second, "report differs on warm replay");
  c.expect(warm.backend_calls == 0, fmt::format("warm replay made {} backend calls",
                                                warm.backend_calls));
  c.expect(cold.backend_calls > 0, "cold run never reached the backend");
  c.expect(elapsed < 5.0, fmt::format("runtime {:.2f}s", elapsed));

  const auto report = nlohmann::json::parse(first);
  const auto filter_report = nlohmann::json::parse(read_file(layout.filter_report()));
  std::map<std::string, int> reasons;
  for (const auto& r : filter_report["removed"]) reasons[r["reason"].get<std::string>()]++;
  c.expect(filter_report["kept_count"] == 77,
           fmt::format("kept {}", filter_report["kept_count"].dump()));
  c.expect(reasons == std::map<std::string, int>{{"duplicate", 1},
                                                 {"fallback", 1},
                                                 {"truncated", 1},
                                                 {"wrong_language", 1}},
           "filter reasons");

  const auto run = validator::ValidationRun::load(
      layout.run("mock-llm", validator::Scenario::kOneExpl));
  c.expect(run.scores.size() == 56 && run.missing.empty(),
           fmt::format("one-expl scored {} missing {}", run.scores.size(), run.missing.size()));
  std::set<std::pair<std::string, std::string>> erroneous;
  const auto verdicts = validator::detect_errors(run, 0.8);
  for (const auto& v : verdicts) {
    if (v.erroneous()) erroneous.insert({v.instance_id, std::string(to_string(v.label))});
  }
  c.expect(verdicts.size() == 29, fmt::format("{} verdicts", verdicts.size()));
  c.expect(erroneous == kErroneousAt08,
           fmt::format("{} erroneous labels at 0.8, want {}", erroneous.size(),
                       kErroneousAt08.size()));

  const auto corpus = load_corpus(layout.filtered());
  const auto gold = label_sets(corpus, SourceFilter::human_valid());
  const auto reference = load_reference(fixtures / "reference.jsonl");
  const auto rows = calibrator::sweep(run, gold, reference);
  c.expect(rows.size() == std::size(kOneExplSweep), "sweep row count");
  for (std::size_t i = 0; i < rows.size() && i < std::size(kOneExplSweep); ++i) {
    const auto& want = kOneExplSweep[i];
    c.near(rows[i].tau, want.tau, 1e-12, "tau");
    c.near(rows[i].kld_mean.value_or(-1), want.kld, 1e-9, fmt::format("kld at {}", want.tau));
    c.near(rows[i].precision.value_or(-1), want.precision, 1e-12,
           fmt::format("precision at {}", want.tau));
    c.near(rows[i].recall.value_or(-1), want.recall, 1e-12,
           fmt::format("recall at {}", want.tau));
  }
  // The sweep the pipeline wrote is the same table.
  c.expect(read_file(layout.sweep_csv("mock-llm", validator::Scenario::kOneExpl)) ==
               calibrator::sweep_to_csv(rows),
           "pipeline sweep CSV");
  c.expect(report["conventions"]["kld_epsilon"] == 1e-4, "convention header");
  return c.outcome(fmt::format(
      "77 kept / 4 removed, 15 erroneous at 0.8, 9 sweep rows, replay identical, {:.2f}s",
      elapsed));
}

// ---------------------------------------------------------------------------

Outcome parsing() {
  Checker c;
  int cases = 0;
  auto one = [&](const std::string& text, std::optional<double> want) {
    ++cases;
    try {
      const double got = validator::parse_one_expl_score(text);
      c.expect(want && got == *want, fmt::format("'{}' -> {}", text, got));
    } catch (const ParseError&) {
      c.expect(!want, fmt::format("'{}' rejected", text));
    }
  };
  one("Probability: 0.85", 0.85);
  one("0.9", 0.9);
  one("Probability: 1.0", 1.0);
  one("Probability:0", 0.0);
  one("  probability: .75\n", 0.75);
  one("The probability is 0.6 because the reason fits.", 0.6);
  one("Probability: 1.2", std::nullopt);
  one("Probability: -0.3", std::nullopt);
  one("Probability: 85%", std::nullopt);
  one("Probability: high", std::nullopt);
  one("", std::nullopt);

  struct Batch {
    std::string text;
    std::map<std::size_t, double> scores;  // empty plus throws = ParseError
    std::vector<std::size_t> out_of_range;
    std::size_t extra = 0;
    bool recovered = false;
    bool throws = false;
  };
  const std::vector<Batch> batches = {
      {R"({"1": 0.9, "2": 0.8, "3": 0.1})", {{1, 0.9}, {2, 0.8}, {3, 0.1}}},
      {R"(Here is the JSON: {"1": 0.9, "2": 0.8, "3": 0.1})", {{1, 0.9}, {2, 0.8}, {3, 0.1}}},
      {"```json\n{\"1\": 0.9, \"2\": 0.8, \"3\": 0.1}\n```", {{1, 0.9}, {2, 0.8}, {3, 0.1}}},
      {R"({"1": 0.9, "2": 0.8, "3": 0.)", {{1, 0.9}, {2, 0.8}}, {}, 0, true},
      {R"({"1": 0.9, "2": 1.4, "3": 0.2})", {{1, 0.9}, {3, 0.2}}, {2}},
      {R"({"1": 0.9, "3": 0.2})", {{1, 0.9}, {3, 0.2}}},
      {R"({"1": 0.9, "2": 0.5, "3": 0.2, "4": 0.3})", {{1, 0.9}, {2, 0.5}, {3, 0.2}}, {}, 1},
      {R"({"1": "0.9", "2": "0.5", "3": "0.2"})", {{1, 0.9}, {2, 0.5}, {3, 0.2}}},
      {"I cannot score these.", {}, {}, 0, false, true},
  };
  for (const auto& b : batches) {
    ++cases;
    try {
      const auto got = validator::parse_batch_scores(b.text, 3);
      c.expect(!b.throws, fmt::format("'{}' accepted", b.text));
      c.expect(got.scores == b.scores, fmt::format("'{}' scores", b.text));
      c.expect(got.out_of_range == b.out_of_range, fmt::format("'{}' out of range", b.text));
      c.expect(got.extra.size() == b.extra, fmt::format("'{}' extra", b.text));
      c.expect(got.recovered == b.recovered, fmt::format("'{}' recovered", b.text));
      std::size_t expected_missing = 3 - b.scores.size();
      c.expect(got.missing.size() == expected_missing, fmt::format("'{}' missing", b.text));
      for (const auto& [k, v] : got.scores) c.expect(v >= 0.0 && v <= 1.0, "never clamped");
    } catch (const ParseError&) {
      c.expect(b.throws, fmt::format("'{}' rejected", b.text));
    }
  }
  return c.outcome(fmt::format("{} curated responses", cases));
}

// ---------------------------------------------------------------------------

struct Criterion {
  std::string name;
  bool needs_external_data;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<Criterion> criteria = {
      {"varierr-stats", true, varierr_stats},
      {"kld-oracle", false, kld_oracle},
      {"ranking-oracle", false, ranking_oracle},
      {"threshold-monotonicity", false, monotonicity},
      {"similarity-properties", false, similarity},
      {"distribution-construction", false, distributions},
      {"end-to-end-mock", false, end_to_end},
      {"parsing-robustness", false, parsing},
  };

  bool offline = false;
  std::string only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--offline") {
      offline = true;
    } else if (arg == "--only" && i + 1 < argc) {
      only = argv[++i];
    } else if (arg == "--list") {
      for (const auto& c : criteria) std::cout << c.name << "\n";
      return 0;
    } else {
      std::cerr << "usage: evade_acceptance [--offline | --only NAME | --list]\n";
      return 64;
    }
  }

  int failed = 0;
  int unavailable = 0;
  int ran = 0;
  for (const auto& criterion : criteria) {
    if (!only.empty() && criterion.name != only) continue;
    if (offline && criterion.needs_external_data) continue;
    ++ran;
    Outcome o;
    try {
      o = criterion.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = fmt::format("threw: {}", e.what());
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << criterion.name << ": " << o.detail
              << std::endl;
    if (!o.pass) {
      ++failed;
      if (o.unavailable) ++unavailable;
    }
  }
  if (ran == 0) {
    std::cerr << "no criterion named '" << only << "'\n";
    return 64;
  }
  if (failed == 0) return 0;
  return failed == unavailable ? 77 : 1;
}
