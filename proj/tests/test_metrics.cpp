#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace ctxtest;

namespace {

IntMatrix signs(std::initializer_list<std::initializer_list<int>> rows) {
  IntMatrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (int v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

}  // namespace

TEST(MfScores, PerfectPredictions) {
  const IntMatrix truth = signs({{1, -1}, {1, 1}, {-1, 1}});
  const auto s = mf_scores(truth.cast<double>(), truth);
  EXPECT_DOUBLE_EQ(s.mf_s, 100.0);
  EXPECT_DOUBLE_EQ(s.mf_c, 100.0);
}

TEST(MfScores, AllNegativePredictions) {
  const IntMatrix truth = signs({{1, -1}, {1, 1}, {-1, 1}});
  EXPECT_DOUBLE_EQ(mf_scores(Matrix::Constant(3, 2, -1.0), truth).mf_s, 0.0);
}

TEST(MfScores, HandCase) {
  const IntMatrix truth = signs({{1, -1}, {1, 1}, {-1, 1}});
  const IntMatrix pred = signs({{1, -1}, {1, -1}, {-1, 1}});
  const auto s = mf_scores(pred.cast<double>(), truth);
  EXPECT_DOUBLE_EQ(s.mf_s, 100.0 * (1.0 + 2.0 / 3.0 + 1.0) / 3.0);
  EXPECT_DOUBLE_EQ(s.mf_c, 100.0 * (1.0 + 2.0 / 3.0) / 2.0);
  EXPECT_NEAR(s.mf_s, 88.89, 0.005);
  EXPECT_NEAR(s.mf_c, 83.33, 0.005);
}

TEST(MfScores, EmptyAgainstEmptyCountsAsOne) {
  const IntMatrix truth = signs({{-1, -1}, {1, -1}});
  const auto s = mf_scores(Matrix::Constant(2, 2, -1.0), truth);
  EXPECT_DOUBLE_EQ(s.mf_s, 50.0);
}

TEST(MeanAveragePrecision, PerfectRanking) {
  const IntMatrix truth = signs({{1, -1}, {-1, 1}, {1, 1}, {-1, -1}});
  Matrix scores(4, 2);
  scores << 2, 0, 0, 2, 3, 3, -1, -1;
  EXPECT_DOUBLE_EQ(map_score(scores, truth), 100.0);
}

TEST(MeanAveragePrecision, HandCase) {
  const IntMatrix truth = signs({{1}, {-1}, {1}, {-1}});
  Matrix scores(4, 1);
  scores << 4, 3, 2, 1;
  EXPECT_DOUBLE_EQ(map_score(scores, truth), 100.0 * (1.0 + 2.0 / 3.0) / 2.0);
}

TEST(MeanAveragePrecision, ConceptsWithoutPositivesAreSkipped) {
  const IntMatrix truth = signs({{1, -1}, {-1, -1}});
  Matrix scores(2, 2);
  scores << 1, 0, 0, 1;
  EXPECT_DOUBLE_EQ(map_score(scores, truth), 100.0);
  EXPECT_THROW(map_score(scores, signs({{-1, -1}, {-1, -1}})), Error);
}

TEST(MeanAveragePrecision, SinglePositiveMonteCarlo) {
  const int M = 20, trials = 10000;
  std::mt19937_64 rng(31);
  double acc = 0;
  for (int i = 0; i < trials; ++i) {
    Eigen::VectorXi truth = Eigen::VectorXi::Constant(M, -1);
    truth(static_cast<Index>(uniform_below(rng, M))) = 1;
    Vector scores(M);
    for (Index p = 0; p < M; ++p) scores(p) = uniform01(rng);
    acc += *average_precision(scores, truth);
  }
  double expect = 0;
  for (int r = 1; r <= M; ++r) expect += 1.0 / r;
  expect /= M;
  EXPECT_NEAR(acc / trials, expect, 0.02 * expect);
}

TEST(Corel, AllKeywordsEverywhere) {
  const IntMatrix truth = IntMatrix::Ones(3, 4);
  std::mt19937_64 rng(32);
  const auto c = corel_metrics(random_matrix(rng, 3, 4), truth, 4);
  EXPECT_DOUBLE_EQ(c.recall, 100.0);
  EXPECT_DOUBLE_EQ(c.precision, 100.0);
  EXPECT_EQ(c.n_plus, 4);
}

TEST(Corel, AbsentKeywordIsExcluded) {
  const IntMatrix truth = signs({{1, -1}, {1, -1}});
  Matrix scores(2, 2);
  scores << 1, 0, 1, 0;
  const auto c = corel_metrics(scores, truth, 1);
  EXPECT_EQ(c.keywords_used, 1);
  EXPECT_DOUBLE_EQ(c.recall, 100.0);
  EXPECT_DOUBLE_EQ(c.precision, 100.0);
  const auto with = corel_metrics(scores, truth, 1, true);
  EXPECT_EQ(with.keywords_used, 2);
  EXPECT_DOUBLE_EQ(with.recall, 50.0);
}

TEST(Corel, HandCase) {
  // Sample 0 truth {k0}, sample 1 truth {k0, k2}; top-1 picks k0 for sample 0
  // and k1 for sample 1.  k0: correct 1, assigned 1, present 2 -> R 1/2, P 1.
  // k1: absent (excluded).  k2: correct 0, assigned 0, present 1 -> R 0, P 0.
  const IntMatrix truth = signs({{1, -1, -1}, {1, -1, 1}});
  Matrix scores(2, 3);
  scores << 0.9, 0.5, 0.1, 0.2, 0.8, 0.3;
  const auto c = corel_metrics(scores, truth, 1);
  EXPECT_EQ(c.keywords_used, 2);
  EXPECT_DOUBLE_EQ(c.recall, 25.0);
  EXPECT_DOUBLE_EQ(c.precision, 50.0);
  EXPECT_DOUBLE_EQ(c.f, 2 * 25.0 * 50.0 / 75.0);
  EXPECT_EQ(c.n_plus, 1);
}

TEST(Reports, CorelReportHasAllLines) {
  const IntMatrix truth = signs({{1, -1}, {-1, 1}});
  const auto rep = corel_report(truth.cast<double>(), truth, 1);
  const auto text = rep.table();
  for (const char* key : {"R ", "P ", "F ", "N+"}) EXPECT_NE(text.find(key), std::string::npos) << key;
}
