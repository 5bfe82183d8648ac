#include <cmath>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "evade/error.hpp"
#include "evade/metrics.hpp"
#include "test_util.hpp"

namespace evade::metrics {
namespace {

// Extended-precision oracle values computed independently (mpmath, 25
// digits) before the implementation existed.
constexpr double kOneHotVsUniform = 1.096570793046733534482747;
constexpr double kSkewedPair = 0.8951947524114227044009152;

TEST(KldTest, FrozenOracles) {
  EXPECT_NEAR(kld({1.0, 0.0, 0.0}, {1.0 / 3, 1.0 / 3, 1.0 / 3}), kOneHotVsUniform,
              1e-9);
  EXPECT_NEAR(kld({0.6, 0.3, 0.1}, {0.1, 0.3, 0.6}), kSkewedPair, 1e-9);
}

TEST(KldTest, IdentityAndErrors) {
  EXPECT_NEAR(kld({0.2, 0.5, 0.3}, {0.2, 0.5, 0.3}), 0.0, 1e-12);
  EXPECT_NEAR(kld({1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}), 0.0, 1e-12);
  EXPECT_THROW(kld({0.5, 0.5, 0.5}, {1.0 / 3, 1.0 / 3, 1.0 / 3}), DataError);
  EXPECT_THROW(kld({-0.1, 0.6, 0.5}, {1.0 / 3, 1.0 / 3, 1.0 / 3}), DataError);
  EXPECT_THROW(kld({1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, 0.0), DataError);
  EXPECT_GT(kld({1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}), 0.0);
}

TEST(DistributionTest, UniformOverLabels) {
  using A = std::array<double, 3>;
  EXPECT_EQ(distribution_from_labels({Label::kEntailment, Label::kNeutral})->values(),
            (A{0.5, 0.5, 0.0}));
  EXPECT_EQ(distribution_from_labels({Label::kEntailment})->values(), (A{1, 0, 0}));
  EXPECT_EQ(distribution_from_labels(
                {Label::kEntailment, Label::kNeutral, Label::kContradiction})
                ->values(),
            (A{1.0 / 3, 1.0 / 3, 1.0 / 3}));
  EXPECT_FALSE(distribution_from_labels({}).has_value());
}

TEST(PrecisionRecallTest, SetArithmetic) {
  const LabelSet en = {Label::kEntailment, Label::kNeutral};
  auto pr = precision_recall({{"a", {Label::kEntailment}}}, {{"a", en}});
  EXPECT_DOUBLE_EQ(*pr.precision, 1.0);
  EXPECT_DOUBLE_EQ(*pr.recall, 0.5);
  pr = precision_recall(
      {{"a", {Label::kEntailment, Label::kNeutral, Label::kContradiction}}},
      {{"a", en}});
  EXPECT_DOUBLE_EQ(*pr.precision, 2.0 / 3);
  EXPECT_DOUBLE_EQ(*pr.recall, 1.0);
  pr = precision_recall({{"a", {}}}, {{"b", en}});
  EXPECT_FALSE(pr.precision.has_value());
  EXPECT_DOUBLE_EQ(*pr.recall, 0.0);
  EXPECT_EQ(pr.gold, 2u);
}

std::vector<LabelKey> keys(int n) {
  std::vector<LabelKey> out;
  for (int i = 1; i <= n; ++i) out.push_back({"x" + std::to_string(i), Label::kNeutral});
  return out;
}

TEST(RankingMetricsTest, Examples) {
  const auto r = keys(5);
  EXPECT_DOUBLE_EQ(average_precision(r, {r[1], r[3]}), 0.5);
  EXPECT_DOUBLE_EQ(precision_at_k(r, {r[1], r[3]}, 2), 0.5);
  EXPECT_DOUBLE_EQ(recall_at_k(r, {r[1], r[3]}, 2), 0.5);
  EXPECT_DOUBLE_EQ(precision_at_k(r, {r[1], r[3]}, 10), 0.2);
  const auto ten = keys(10);
  EXPECT_DOUBLE_EQ(average_precision(ten, {ten[0]}), 1.0);
  EXPECT_DOUBLE_EQ(precision_at_k(ten, {ten[0]}, 1), 1.0);
  EXPECT_THROW(average_precision({}, {ten[0]}), DataError);
  EXPECT_THROW(average_precision(ten, {}), DataError);
}

TEST(LexicalTest, Examples) {
  EXPECT_DOUBLE_EQ(lexical_similarity("the cat sat", "the cat ran", 1), 0.5);
  EXPECT_DOUBLE_EQ(lexical_similarity("The Cat", "the cat", 2), 1.0);
  EXPECT_DOUBLE_EQ(lexical_similarity("a b", "c d", 1), 0.0);
  EXPECT_DOUBLE_EQ(lexical_similarity("", "", 1), 1.0);
  EXPECT_DOUBLE_EQ(lexical_similarity("", "word", 1), 0.0);
  // Too short for trigrams on both sides.
  EXPECT_DOUBLE_EQ(lexical_similarity("a b", "a b", 3), 1.0);
  EXPECT_DOUBLE_EQ(lexical_similarity("a b", "b a", 3), 0.0);
  EXPECT_DOUBLE_EQ(lexical_similarity("x y z", "y z x", 2), 1.0 / 3);
}

TEST(SyntacticTest, FixedTags) {
  PrecomputedTagger tagger;
  tagger.add("one", {"DT", "NN", "VB"});
  tagger.add("two", {"DT", "NN", "JJ"});
  tagger.add("", {});
  EXPECT_DOUBLE_EQ(syntactic_similarity("one", "two", 1, tagger), 0.5);
  EXPECT_DOUBLE_EQ(syntactic_similarity("one", "one", 3, tagger), 1.0);
  EXPECT_DOUBLE_EQ(syntactic_similarity("", "one", 1, tagger), 0.0);
  try {
    syntactic_similarity("one", "unknown text", 1, tagger);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("unknown text"), std::string::npos);
  }
}

TEST(SemanticTest, Examples) {
  const std::vector<double> a = {1, 0}, b = {1, 1}, c = {0, 1};
  auto s = semantic_similarity(a, b);
  EXPECT_NEAR(s.cosine, 0.70711, 1e-5);
  EXPECT_DOUBLE_EQ(s.euclidean, 0.5);
  s = semantic_similarity(a, a);
  EXPECT_DOUBLE_EQ(s.cosine, 1.0);
  EXPECT_DOUBLE_EQ(s.euclidean, 1.0);
  EXPECT_DOUBLE_EQ(semantic_similarity(a, c).cosine, 0.0);
  const std::vector<double> neg = {-1, 0}, zero = {0, 0}, three = {1, 0, 0};
  EXPECT_DOUBLE_EQ(semantic_similarity(a, neg).cosine, 0.0);
  EXPECT_THROW(semantic_similarity(a, zero), DataError);
  EXPECT_THROW(semantic_similarity(a, three), DataError);
}

TEST(RegimeTest, IdenticalCrossPairsScoreOne) {
  std::vector<Instance> instances;
  for (int i = 0; i < 3; ++i) {
    std::vector<Explanation> es;
    for (Label l : kAllLabels) {
      const std::string t = "reason " + std::to_string(i) + std::string(to_string(l));
      es.push_back(testing::expl(l, t, Source::human("a")));
      es.push_back(testing::expl(l, t, Source::model("m")));
    }
    instances.push_back(testing::instance("i" + std::to_string(i), es));
  }
  SimilarityConfig cfg;
  cfg.ngram_orders = {1};
  const auto s = regime_similarity(Corpus(instances), Regime::kLlmVsHuman, cfg);
  EXPECT_DOUBLE_EQ(s.means.at("lexical_n1"), 1.0);
  EXPECT_EQ(s.items, 3u);
  EXPECT_EQ(s.labels, 9u);
  EXPECT_EQ(s.pairs, 9u);
  EXPECT_THROW(regime_similarity(Corpus(instances), Regime::kWithinHuman, cfg),
               DataError);
}

TEST(RegimeTest, SinglePairAndSymmetry) {
  const Corpus corpus({testing::instance(
      "x", {testing::expl(Label::kNeutral, "the cat sat", Source::model("m")),
            testing::expl(Label::kNeutral, "the cat ran", Source::model("m")),
            testing::expl(Label::kNeutral, "a dog ran", Source::model("other"))})});
  SimilarityConfig cfg;
  cfg.ngram_orders = {1};
  RuleBasedTagger tagger;
  cfg.tagger = &tagger;
  cfg.model = "m";
  const auto s = regime_similarity(corpus, Regime::kWithinLlm, cfg);
  EXPECT_DOUBLE_EQ(s.means.at("lexical_n1"), 0.5);
  EXPECT_EQ(s.pairs, 1u);
  EXPECT_TRUE(s.means.contains("syntactic_n1"));
  EXPECT_FALSE(s.means.contains("cosine"));
  EXPECT_EQ(s.to_json()["model"], "m");
}

TEST(GenerationStatsTest, Arithmetic) {
  const Corpus corpus({testing::instance(
      "x", {testing::expl(Label::kNeutral, "one two three", Source::human("a")),
            testing::expl(Label::kNeutral, "four  five six", Source::human("b")),
            testing::expl(Label::kEntailment, "model text", Source::model("m"))})});
  const auto s = generation_stats(corpus, SourceFilter::human());
  EXPECT_EQ(s.explanations, 2u);
  EXPECT_DOUBLE_EQ(s.mean_words, 3.0);
  EXPECT_DOUBLE_EQ(s.labels_per_item, 1.0);
  EXPECT_DOUBLE_EQ(s.explanations_per_label, 2.0);
}

validator::ValidationRun run_with(std::vector<double> scores) {
  validator::ValidationRun run;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    run.scores[{"x", Label::kNeutral, Source::model("m"), i}] = scores[i];
  }
  return run;
}

TEST(ValidationStatsTest, PopulationStd) {
  auto s = validation_stats(run_with({0.2, 0.8}));
  EXPECT_DOUBLE_EQ(s.mean, 0.5);
  EXPECT_NEAR(s.mean_label_std, 0.3, 1e-12);
  s = validation_stats(run_with({0.7, 0.7, 0.7}));
  EXPECT_DOUBLE_EQ(s.mean, 0.7);
  EXPECT_NEAR(s.mean_label_std, 0.0, 1e-12);
  EXPECT_THROW(validation_stats(run_with({})), DataError);
}

TEST(WeightedF1Test, ConfusionMatrixOracle) {
  const LabelDistribution e({1, 0, 0}), n({0, 1, 0}), c({0, 0, 1});
  // gold E E N C, predicted E N N C: F1 per class 2/3, 2/3, 1 with
  // supports 2, 1, 1.
  const std::map<std::string, LabelDistribution> gold = {
      {"1", e}, {"2", e}, {"3", n}, {"4", c}};
  const std::map<std::string, LabelDistribution> pred = {
      {"1", e}, {"2", n}, {"3", n}, {"4", c}};
  EXPECT_DOUBLE_EQ(weighted_f1(pred, gold), 0.75);
  EXPECT_DOUBLE_EQ(weighted_f1(gold, gold), 1.0);
  EXPECT_DOUBLE_EQ(weighted_f1({{"1", n}, {"2", c}}, {{"1", e}, {"2", e}}), 0.0);
  EXPECT_THROW(weighted_f1({}, {}), DataError);
  EXPECT_THROW(weighted_f1({{"1", e}}, {{"2", e}}), DataError);
}

}  // namespace
}  // namespace evade::metrics
