#include <gtest/gtest.h>

#include <cmath>

#include "visita/error.hpp"
#include "visita/retrieval.hpp"
#include "visita/synthetic.hpp"

using namespace visita;

namespace {

ScoredSplit diagonal_split(std::size_t n, Rng* noise) {
  ScoredSplit s;
  s.scores = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    s.image_groups.push_back(i);
    s.text_groups.push_back(i);
    s.image_ids.push_back("i" + std::to_string(i));
    s.text_ids.push_back("t" + std::to_string(i));
    for (std::size_t j = 0; j < n; ++j) s.scores(i, j) = noise ? noise->uniform() : (i == j ? 0.9 : 0.1);
  }
  return s;
}

const std::vector<std::size_t> kKs{1, 5, 10};

}  // namespace

TEST(EvaluateScores, SingletonIsPerfect) {
  const EvalReport r = evaluate_scores(diagonal_split(1, nullptr), kKs);
  EXPECT_EQ(r.recall_at_k.at(1), 1.0);
  EXPECT_EQ(r.map, 1.0);
}

TEST(EvaluateScores, OracleScorerIsPerfect) {
  const EvalReport r = evaluate_scores(diagonal_split(12, nullptr), kKs);
  for (const auto& [k, v] : r.recall_at_k) EXPECT_EQ(v, 1.0) << k;
  EXPECT_EQ(r.map, 1.0);
  EXPECT_EQ(*r.recall, 1.0);
  EXPECT_EQ(*r.precision, 1.0);
  EXPECT_EQ(r.counts, (ConfusionCounts{12, 0, 0, 132}));
  EXPECT_EQ(r.per_query_ap.size(), 24u);
}

TEST(EvaluateScores, ClassificationCountsUseThreshold) {
  ScoredSplit s = diagonal_split(2, nullptr);
  s.scores = Matrix{{0.7, 0.6}, {0.2, 0.4}};
  const EvalReport r = evaluate_scores(s, kKs, 0.5);
  EXPECT_EQ(r.counts, (ConfusionCounts{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(*r.recall, 0.5);
  EXPECT_DOUBLE_EQ(*r.precision, 0.5);
  s.scores = Matrix{{0.1, 0.1}, {0.1, 0.1}};
  EXPECT_FALSE(evaluate_scores(s, kKs, 0.5).precision.has_value());
}

TEST(EvaluateScores, GroupsDefineRelevance) {
  ScoredSplit s = diagonal_split(3, nullptr);
  s.text_groups = {0, 0, 2};
  s.image_groups = {0, 0, 2};
  s.scores = Matrix{{0.1, 0.9, 0.0}, {0.2, 0.8, 0.0}, {0.0, 0.0, 1.0}};
  const EvalReport r = evaluate_scores(s, kKs);
  // Image 0 ranks text 1 first; sharing a group makes that a hit.
  EXPECT_EQ(r.image_to_text.recall_at_k.at(1), 1.0);
  s.text_groups = s.image_groups = {0, 1, 2};
  EXPECT_EQ(evaluate_scores(s, kKs).image_to_text.recall_at_k.at(1), 2.0 / 3.0);
}

TEST(EvaluateScores, RandomScoresGiveChanceRecall) {
  std::vector<double> r1;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    r1.push_back(evaluate_scores(diagonal_split(100, &rng), kKs).recall_at_k.at(1));
  }
  double mean = 0.0, var = 0.0;
  for (double v : r1) mean += v;
  mean /= 20.0;
  for (double v : r1) var += (v - mean) * (v - mean);
  const double se = std::sqrt(var / 19.0 / 20.0);
  EXPECT_LE(std::abs(mean - 0.01), 3.0 * se) << "mean " << mean << " se " << se;
}

TEST(EvaluateScores, MetricsStayInUnitInterval) {
  Rng rng(91);
  for (int t = 0; t < 10; ++t) {
    ScoredSplit s = diagonal_split(15, &rng);
    for (auto& g : s.text_groups) g = rng.below(5);
    s.image_groups = s.text_groups;
    const EvalReport r = evaluate_scores(s, kKs);
    EXPECT_GE(r.map, 0.0);
    EXPECT_LE(r.map, 1.0);
    for (const auto& [k, v] : r.recall_at_k) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(EvaluateRetrieval, ModelPipelineAndMklHead) {
  Rng rng(92);
  SyntheticData syn = generate_synthetic(40, 4, 8, rng);
  DataOptions opt;
  opt.image_size = 8;
  opt.caption_len = 8;
  const PairDataset data = assemble_dataset(syn.rows, syn.images, opt);
  ModelConfig c;
  c.image_size = 8;
  c.conv_channels = 2;
  c.d_model = 8;
  c.d_embed = 4;
  c.heads = 2;
  c.blocks = 1;
  c.ffn_hidden = 8;
  c.caption_len = 8;
  c.vocab_size = data.vocab.size();
  MatchModel m = MatchModel::init(c, 3);

  const EvalReport cos = evaluate_retrieval(m, data, Split::test, kKs);
  EXPECT_EQ(cos.scorer, "cosine");
  EXPECT_EQ(cos.threshold, 0.5);
  EXPECT_EQ(cos.num_images, data.split_indices(Split::test).size());

  MklHeadOptions ho;
  ho.positives = 20;
  m.mkl_head = fit_mkl_head(m, data, ho);
  EXPECT_EQ(m.mkl_head->dimension(), 8u);
  const EvalReport mkl = evaluate_retrieval(m, data, Split::test, kKs, true);
  EXPECT_EQ(mkl.scorer, "mkl");
  EXPECT_EQ(mkl.threshold, 0.0);
  const ScoredSplit sc = score_split(m, data, Split::test, true);
  EXPECT_EQ(sc.scores.rows(), mkl.num_images);
}
