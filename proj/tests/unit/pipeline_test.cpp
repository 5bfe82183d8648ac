#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "evade/pipeline.hpp"
#include "test_util.hpp"

namespace evade::pipeline {
namespace {

namespace fs = std::filesystem;

struct Setup {
  Config config;
  Layout layout;
  std::unique_ptr<llm::Gateway> gateway;
};

Setup setup(const fs::path& out) {
  Setup s;
  s.config = Config::load(testing::fixture("pipeline_config.json"));
  s.config.out_dir = out;
  s.layout = resolve(s.config, EVADE_FIXTURE_DIR);
  GatewayOptions opt;
  opt.mock = testing::fixture("mock.jsonl");
  s.gateway = make_gateway(s.config, s.layout, opt);
  return s;
}

// Every artifact except the response cache, keyed by relative path.
std::map<std::string, std::string> artifacts(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), root);
    if (*rel.begin() == "cache") continue;
    out[rel.string()] = testing::read_file(entry.path());
  }
  return out;
}

TEST(PipelineTest, StagesOneByOneMatchFullRun) {
  testing::TempDir dir;
  auto full = setup(dir / "full");
  run_pipeline(full.config, full.layout, *full.gateway);

  auto staged = setup(dir / "staged");
  generate(staged.config, staged.layout, *staged.gateway);
  filter(staged.config, staged.layout);
  validate(staged.config, staged.layout, *staged.gateway);
  calibrate(staged.config, staged.layout);
  detect_errors(staged.config, staged.layout);
  compute_metrics(staged.config, staged.layout, staged.gateway.get());
  prune(staged.config, staged.layout, *staged.gateway);
  export_labels(staged.config, staged.layout);

  auto a = artifacts(dir / "full");
  const auto b = artifacts(dir / "staged");
  EXPECT_EQ(a.erase("report.json"), 1u);
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, content] : a) {
    ASSERT_TRUE(b.contains(name)) << name;
    EXPECT_EQ(content, b.at(name)) << name;
  }
}

TEST(PipelineTest, ExpectedFixtureOutcome) {
  testing::TempDir dir;
  auto s = setup(dir / "out");
  const auto report = run_pipeline(s.config, s.layout, *s.gateway).json();
  EXPECT_EQ(report["generation"]["models"][0]["explanations"], 60);
  EXPECT_EQ(report["generation"]["models"][0]["truncated_responses"], 1);
  EXPECT_EQ(report["filter"]["kept_count"], 77);
  EXPECT_EQ(report["filter"]["removed_count"], 4);
  for (const char* reason : {"fallback", "truncated", "wrong_language", "duplicate"}) {
    EXPECT_EQ(report["filter"]["by_reason"][reason], 1) << reason;
  }
  EXPECT_EQ(report["calibration"]["runs"][0]["selection"]["tau"], 0.5);
  EXPECT_EQ(report["conventions"]["tagger"], "evade-rules-v1");
  EXPECT_EQ(report["config"]["corpus"], "corpus.jsonl");
  EXPECT_TRUE(report.contains("metrics"));
  EXPECT_EQ(report["prune"]["labels_removed"], 4);
  EXPECT_FALSE(report.dump().find("hit_rate") != std::string::npos);
}

TEST(PipelineTest, WarmReplayIsByteIdentical) {
  testing::TempDir dir;
  std::string first;
  {
    auto s = setup(dir / "out");
    run_pipeline(s.config, s.layout, *s.gateway);
    first = testing::read_file(s.layout.report());
  }
  auto s = setup(dir / "out");
  run_pipeline(s.config, s.layout, *s.gateway);
  EXPECT_EQ(testing::read_file(s.layout.report()), first);
  EXPECT_EQ(s.gateway->stats().backend_calls, 0u);
  EXPECT_GT(s.gateway->stats().cache_hits, 0u);
}

}  // namespace
}  // namespace evade::pipeline
