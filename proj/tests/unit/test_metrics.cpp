#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "visita/error.hpp"
#include "visita/metrics.hpp"
#include "visita/rng.hpp"

using namespace visita;

namespace {

RankedList make_list(const std::string& q, std::vector<std::string> cands, std::set<std::string> rel) {
  return RankedList{q, std::move(cands), std::move(rel)};
}

RankedList random_list(Rng& rng, std::size_t id) {
  const std::size_t n = 1 + rng.below(20);
  RankedList l;
  l.query_id = "q" + std::to_string(id);
  for (std::size_t i = 0; i < n; ++i) l.candidates.push_back("c" + std::to_string(i));
  rng.shuffle(std::span<std::string>(l.candidates));
  const std::size_t r = 1 + rng.below(n);
  for (std::size_t i = 0; i < r; ++i) l.relevant.insert(l.candidates[rng.below(n)]);
  return l;
}

}  // namespace

TEST(Recall, HandCases) {
  EXPECT_DOUBLE_EQ(recall({9, 0, 1, 0}), 0.9);
  EXPECT_EQ(recall({4, 7, 0, 2}), 1.0);
  EXPECT_THROW(recall({0, 3, 0, 5}), UndefinedMetricError);
}

TEST(Precision, HandCases) {
  EXPECT_DOUBLE_EQ(precision({9, 1, 0, 0}), 0.9);
  EXPECT_EQ(precision({4, 0, 3, 2}), 1.0);
  EXPECT_THROW(precision({0, 0, 3, 5}), UndefinedMetricError);
}

TEST(AveragePrecision, HandCases) {
  EXPECT_EQ(average_precision(make_list("q", {"a", "b", "c"}, {"a", "b"})), 1.0);
  EXPECT_EQ(average_precision(make_list("q", {"a", "b"}, {"b"})), 0.5);
  EXPECT_THROW(average_precision(make_list("q", {"a"}, {})), UndefinedMetricError);
}

TEST(AveragePrecision, MatchesBruteForceOracle) {
  Rng rng(81);
  for (std::size_t t = 0; t < 100; ++t) {
    const RankedList l = random_list(rng, t);
    EXPECT_NEAR(average_precision(l), oracle::brute_force_ap(l.candidates, l.relevant), 1e-12);
  }
}

TEST(AveragePrecision, IgnoresOrderBelowLastRelevant) {
  Rng rng(82);
  for (std::size_t t = 0; t < 50; ++t) {
    RankedList l = random_list(rng, t);
    std::size_t last = 0;
    for (std::size_t i = 0; i < l.candidates.size(); ++i)
      if (l.relevant.count(l.candidates[i])) last = i;
    const double ap = average_precision(l);
    std::shuffle(l.candidates.begin() + static_cast<std::ptrdiff_t>(last + 1), l.candidates.end(),
                 std::mt19937(static_cast<unsigned>(t)));
    EXPECT_EQ(average_precision(l), ap);
  }
}

TEST(AveragePrecision, ValidatesList) {
  EXPECT_THROW(average_precision(make_list("q", {"a", "a"}, {"a"})), InvalidInputError);
  EXPECT_THROW(average_precision(make_list("q", {"a"}, {"z"})), InvalidInputError);
}

TEST(MeanAveragePrecision, MeanProperties) {
  const std::vector<RankedList> two{make_list("q1", {"a", "b"}, {"a"}), make_list("q2", {"a", "b"}, {"b"})};
  EXPECT_DOUBLE_EQ(mean_average_precision(two), 0.75);
  EXPECT_EQ(mean_average_precision(std::span(two).first(1)), 1.0);
  Rng rng(83);
  const RankedList l = random_list(rng, 0);
  const std::vector<RankedList> copies(7, l);
  EXPECT_NEAR(mean_average_precision(copies), average_precision(l), 1e-15);
  EXPECT_THROW(mean_average_precision(std::vector<RankedList>{}), InvalidInputError);
}

TEST(MeanAveragePrecision, UndefinedApNamesQuery) {
  const std::vector<RankedList> lists{make_list("q1", {"a"}, {"a"}), make_list("lonely", {"a"}, {})};
  try {
    mean_average_precision(lists);
    FAIL();
  } catch (const UndefinedMetricError& e) {
    EXPECT_NE(std::string(e.what()).find("lonely"), std::string::npos);
  }
}

TEST(RecallAtK, Definition) {
  const std::vector<RankedList> top{make_list("q", {"a", "b", "c"}, {"a"})};
  EXPECT_EQ(recall_at_k(top, 1), 1.0);
  const std::vector<RankedList> third{make_list("q", {"a", "b", "c", "d"}, {"c"})};
  EXPECT_EQ(recall_at_k(third, 1), 0.0);
  EXPECT_EQ(recall_at_k(third, 5), 1.0);
  EXPECT_THROW(recall_at_k(third, 0), InvalidInputError);
  EXPECT_THROW(recall_at_k(std::vector<RankedList>{}, 1), InvalidInputError);
}

TEST(RecallAtK, HandCountedCollection) {
  // Relevant rank per list, one relevant item each.
  const int ranks[] = {1, 2, 3, 6, 1, 5, 2, 4, 1, 3};
  std::vector<RankedList> lists;
  for (int i = 0; i < 10; ++i) {
    RankedList l;
    l.query_id = "q" + std::to_string(i);
    for (int c = 1; c <= 6; ++c) l.candidates.push_back("c" + std::to_string(c));
    l.relevant = {"c" + std::to_string(ranks[i])};
    lists.push_back(l);
  }
  EXPECT_DOUBLE_EQ(recall_at_k(lists, 1), 0.3);
  EXPECT_DOUBLE_EQ(recall_at_k(lists, 2), 0.5);
  EXPECT_DOUBLE_EQ(recall_at_k(lists, 3), 0.7);
  EXPECT_DOUBLE_EQ(recall_at_k(lists, 5), 0.9);
  EXPECT_DOUBLE_EQ(recall_at_k(lists, 6), 1.0);
}

TEST(RecallAtK, MonotoneInK) {
  Rng rng(84);
  std::vector<RankedList> lists;
  for (std::size_t t = 0; t < 30; ++t) lists.push_back(random_list(rng, t));
  double prev = 0.0;
  for (std::size_t k = 1; k <= 25; ++k) {
    const double r = recall_at_k(lists, k);
    EXPECT_GE(r, prev);
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
    prev = r;
  }
}

TEST(EvalReport, JsonAndTable) {
  EvalReport r;
  r.recall = 0.9;
  r.map = 0.75;
  r.recall_at_k = {{1, 0.5}, {5, 1.0}};
  const std::string json = r.to_json();
  EXPECT_NE(json.find("\"precision\": null"), std::string::npos) << json;
  EXPECT_NE(json.find("\"map\": 0.75"), std::string::npos) << json;
  const std::string table = r.to_table("visita");
  EXPECT_NE(table.find("mAP"), std::string::npos);
  EXPECT_NE(table.find("R@5"), std::string::npos);
  EXPECT_NE(table.find("75.00"), std::string::npos) << table;
}
