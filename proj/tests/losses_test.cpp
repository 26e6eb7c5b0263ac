// Copyright 2026 The pholid Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "checks.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "pholid/error.hpp"
#include "pholid/losses.hpp"

namespace pholid {
namespace {

using testing::RandomMatrix;

Matrix Rows(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

TEST(CosineSim, HandValues) {
  EXPECT_DOUBLE_EQ(CosineSim(Rows({{1, 0}}), Rows({{1, 0}})), 1.0);
  EXPECT_DOUBLE_EQ(CosineSim(Rows({{1, 0}}), Rows({{0, 1}})), 0.0);
  EXPECT_NEAR(CosineSim(Rows({{1, 1}}), Rows({{1, 0}})), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(CosineSim, ZeroVectorIsZeroNotNan) {
  EXPECT_EQ(CosineSim(Rows({{0, 0}}), Rows({{1, 0}})), 0.0);
}

TEST(FrameNce, IdenticalEmbeddingsGiveLogMPlusOne) {
  const Matrix z = Matrix::Constant(8, 3, 0.7);
  NegativeSampleSet neg{2, {0, 5, 7}};
  EXPECT_NEAR(FrameNce(z, neg), std::log(4.0), 1e-12);
}

TEST(FrameNce, OrthogonalNegative) {
  const Matrix z = Rows({{1, 0}, {1, 0}, {0, 0}, {0, 1}});
  NegativeSampleSet neg{0, {3}};
  EXPECT_NEAR(FrameNce(z, neg), std::log(1 + std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(FrameNce(z, neg), 0.3133, 5e-5);
}

TEST(FrameNce, EqualPositiveAndNegativeSimilarityGivesLog2) {
  const Matrix z = Rows({{1, 0}, {1, 1}, {0, 0}, {1, 1}});
  EXPECT_NEAR(FrameNce(z, {0, {3}}), std::log(2.0), 1e-12);
}

TEST(FrameNce, NonNegativeAndScaleInvariant) {
  Rng rng(5);
  for (int it = 0; it < 50; ++it) {
    Matrix z = RandomMatrix(10, 4, rng);
    const auto neg = SampleNegatives(10, 4, 3, rng);
    const double l = FrameNce(z, neg);
    EXPECT_GE(l, 0.0);
    Matrix scaled = z;
    for (Eigen::Index r = 0; r < z.rows(); ++r) scaled.row(r) *= 0.1 + r;
    EXPECT_NEAR(FrameNce(scaled, neg), l, 1e-12);
  }
}

TEST(UtteranceNce, SingleSegmentIdenticalIsLog4) {
  const SegmentationFrameEmbeddings z{Matrix::Constant(20, 4, -1.5)};
  EXPECT_NEAR(UtteranceNce(z, 3, 9), std::log(4.0), 1e-12);
  const SegmentationFrameEmbeddings twice{Matrix::Constant(40, 4, -1.5)};
  EXPECT_NEAR(UtteranceNce(twice, 3, 9), std::log(4.0), 1e-12);
}

TEST(UtteranceNce, NormalisedByAnchorCount) {
  Rng rng(2);
  const Matrix z = RandomMatrix(7, 3, rng);
  const auto negs = SampleUtteranceNegatives(7, 2, rng);
  ASSERT_EQ(negs.size(), 6u);
  double sum = 0;
  for (const auto& n : negs) sum += FrameNce(z, n);
  EXPECT_NEAR(UtteranceNce(z, negs), sum / 6.0, 1e-14);
}

TEST(UtteranceNce, DeterministicGivenSeed) {
  Rng rng(3);
  const SegmentationFrameEmbeddings z{RandomMatrix(40, 4, rng)};
  EXPECT_EQ(UtteranceNce(z, 3, 77), UtteranceNce(z, 3, 77));
}

TEST(LossOracles, MatchBruteForce) {
  for (const auto& r : testing::RunLossOracles(200, 123)) {
    EXPECT_GE(r.instances, 100u) << r.name;
    EXPECT_LT(r.max_abs_diff, 1e-6) << r.name;
  }
}

TEST(LidCrossEntropy, HandValues) {
  const std::vector<int> zero{0};
  EXPECT_NEAR(LidCrossEntropy(Matrix::Zero(1, 10), zero), std::log(10.0), 1e-12);
  EXPECT_NEAR(LidCrossEntropy(Rows({{2, 0}}), zero), 0.1269, 5e-5);
  EXPECT_NEAR(LidCrossEntropy(Rows({{2, 0}}), zero), std::log(1 + std::exp(-2.0)), 1e-12);
  EXPECT_NEAR(LidCrossEntropy(Rows({{800, 0, 0}}), zero), 0.0, 1e-300);
  // Stable for large logits where a naive softmax overflows.
  EXPECT_TRUE(std::isfinite(LidCrossEntropy(Rows({{0, 900}}), zero)));
}

TEST(LidCrossEntropy, DecreasesWhenTrueLogitRises) {
  Rng rng(8);
  Matrix s = RandomMatrix(3, 4, rng);
  const std::vector<int> y{2, 0, 3};
  double prev = LidCrossEntropy(s, y);
  for (int k = 0; k < 20; ++k) {
    s(1, 0) += 0.25;
    const double cur = LidCrossEntropy(s, y);
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

TEST(LidCrossEntropy, RejectsBadLabels) {
  const std::vector<int> y{4};
  EXPECT_THROW(LidCrossEntropy(Matrix::Zero(1, 3), y), Error);
}

TEST(MultiTaskLoss, Values) {
  EXPECT_DOUBLE_EQ(MultiTaskLoss(1.3, 9.0, 1.0), 1.3);
  EXPECT_NEAR(MultiTaskLoss(1.0, 2.0, 0.95), 1.05, 1e-15);
  EXPECT_DOUBLE_EQ(MultiTaskLoss(1.3, 9.0, 0.0), 9.0);
  EXPECT_THROW(MultiTaskLoss(1, 1, 1.01), Error);
  EXPECT_THROW(MultiTaskLoss(1, 1, -0.01), Error);
}

TEST(MultiTaskLoss, DerivativeInAlphaIsLossGap) {
  const double lid = 0.8, nce = 2.1, a = 0.4, h = 1e-6;
  const double d = (MultiTaskLoss(lid, nce, a + h) - MultiTaskLoss(lid, nce, a - h)) / (2 * h);
  EXPECT_NEAR(d, lid - nce, 1e-9);
}

TEST(SampleNegatives, ForcedSet) {
  const auto s = SampleNegatives(5, 2, 2, 42);
  std::set<std::size_t> got(s.indices.begin(), s.indices.end());
  EXPECT_EQ(got, (std::set<std::size_t>{0, 4}));
}

TEST(SampleNegatives, ContractHoldsEverywhere) {
  Rng rng(1);
  for (std::size_t n = 4; n < 30; ++n) {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::size_t candidates = n - (i == 0 ? 2 : 3);
      for (std::size_t m : {std::size_t{1}, candidates}) {
        if (n < m + 3) continue;
        const auto s = SampleNegatives(n, i, m, rng);
        ASSERT_EQ(s.indices.size(), m);
        EXPECT_NO_THROW(ValidateNegatives(n, s));
        for (auto j : s.indices) EXPECT_TRUE(j + 1 < i || j > i + 1);
      }
    }
  }
}

TEST(SampleNegatives, InsufficientCandidatesIsAnError) {
  EXPECT_THROW(SampleNegatives(5, 2, 3, 1), Error);
  EXPECT_THROW(SampleNegatives(12, 2, 10, 1), Error);
}

TEST(SampleNegatives, DeterministicGivenSeed) {
  EXPECT_EQ(SampleNegatives(50, 20, 10, 5).indices, SampleNegatives(50, 20, 10, 5).indices);
}

TEST(ValidateNegatives, RejectsAdjacentAndDuplicates) {
  EXPECT_THROW(ValidateNegatives(10, {4, {3}}), Error);
  EXPECT_THROW(ValidateNegatives(10, {4, {5}}), Error);
  EXPECT_THROW(ValidateNegatives(10, {4, {4}}), Error);
  EXPECT_THROW(ValidateNegatives(10, {4, {0, 0}}), Error);
  EXPECT_THROW(ValidateNegatives(10, {4, {10}}), Error);
  EXPECT_NO_THROW(ValidateNegatives(10, {4, {0, 9}}));
}

// Draw frequencies over the 7 candidates of anchor 4 in 10 frames.
TEST(SampleNegatives, UniformChiSquare) {
  Rng rng(2024);
  std::vector<double> counts(10, 0.0);
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    for (auto j : SampleNegatives(10, 4, 2, rng).indices) counts[j] += 1;
  }
  for (std::size_t j : {3u, 4u, 5u}) EXPECT_EQ(counts[j], 0.0);
  const double p = 2.0 / 7.0;
  const double expected = draws * p;
  const double sigma = std::sqrt(draws * p * (1 - p));
  double chi2 = 0;
  for (std::size_t j : {0u, 1u, 2u, 6u, 7u, 8u, 9u}) {
    EXPECT_LT(std::abs(counts[j] - expected), 3 * sigma) << j;
    chi2 += (counts[j] - expected) * (counts[j] - expected) / expected;
  }
  EXPECT_LT(chi2, 22.46);  // 0.999 quantile, 6 degrees of freedom
}

}  // namespace
}  // namespace pholid
