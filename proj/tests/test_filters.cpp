// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fret/filters.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

namespace fret {
namespace {

using testing::random_matrix;

ClassCenters all_valid(const Matrix& c) {
  return {c, std::vector<bool>(static_cast<std::size_t>(c.rows()), true), std::vector<long>(static_cast<std::size_t>(c.rows()), 1)};
}

// One nonzero logit per row; smaller margins mean higher entropy.
Matrix class_logits(const std::vector<int>& cls, const std::vector<double>& margin, Index num_classes) {
  Matrix m = Matrix::Zero(static_cast<Index>(cls.size()), num_classes);
  for (std::size_t i = 0; i < cls.size(); ++i) m(static_cast<Index>(i), cls[i]) = margin[i];
  return m;
}

TEST(Entropy, Examples) {
  EXPECT_NEAR(entropy(Matrix::Zero(1, 4)).h[0], std::log(4.0), 1e-12);
  Matrix peaked(1, 2);
  peaked << 100, 0;
  EXPECT_NEAR(entropy(peaked).h[0], 0.0, 1e-12);
  Matrix three(1, 3);
  three << 1, 2, 3;
  EXPECT_NEAR(entropy(three).h[0], 0.8323955818399389, 1e-12);
}

TEST(Entropy, BoundsAndOracle) {
  std::mt19937_64 rng(31);
  const Matrix logits = random_matrix(50, 6, rng, -10, 10);
  const EntropyScores h = entropy(logits);
  ASSERT_EQ(h.size(), 50u);
  for (Index i = 0; i < 50; ++i) {
    EXPECT_GE(h.h[static_cast<std::size_t>(i)], 0.0);
    EXPECT_LE(h.h[static_cast<std::size_t>(i)], std::log(6.0) + 1e-12);
    EXPECT_NEAR(h.h[static_cast<std::size_t>(i)], testing::brute_entropy(logits, i), 1e-12);
  }
}

TEST(TopkPerClass, Examples) {
  const Matrix logits = class_logits({0, 0, 0, 0}, {4, 3, 2, 1}, 2);
  const EntropyScores h{{0.1, 0.2, 0.3, 0.4}};
  EXPECT_EQ(topk_per_class(h, logits, 2), std::vector<Index>({0, 1}));
  EXPECT_EQ(topk_per_class(h, logits, 4), std::vector<Index>({0, 1, 2, 3}));
  EXPECT_EQ(topk_per_class(h, logits, 100), std::vector<Index>({0, 1, 2, 3}));
  EXPECT_THROW(topk_per_class(h, logits, 0), Error);
}

TEST(TopkPerClass, TiesBreakByIndex) {
  const Matrix logits = class_logits({1, 1, 1}, {2, 2, 2}, 2);
  const EntropyScores h{{0.5, 0.5, 0.5}};
  EXPECT_EQ(topk_per_class(h, logits, 2), std::vector<Index>({0, 1}));
}

TEST(TopkPerClass, MatchesBruteForceSort) {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix logits = random_matrix(10, 3, rng, -3, 3);
    const EntropyScores h = entropy(logits);
    for (long k1 : {1L, 2L, 3L, 10L}) {
      const auto got = topk_per_class(h, logits, k1);
      EXPECT_EQ(got, testing::brute_topk_per_class(h.h, logits, k1));
      std::vector<int> per(3, 0);
      for (Index i : got) ++per[static_cast<std::size_t>(testing::brute_argmax(logits, i))];
      for (int c : per) EXPECT_LE(c, k1);
    }
  }
}

TEST(SoftPseudoLabels, Examples) {
  const SoftPseudoLabels y = soft_pseudo_labels(Matrix::Identity(1, 2), all_valid(Matrix::Identity(2, 2)));
  EXPECT_NEAR(y.y_hat(0, 0), 0.7310585786300049, 1e-12);
  EXPECT_NEAR(y.y_hat(0, 1), 0.2689414213699951, 1e-12);

  ClassCenters single = all_valid(Matrix::Identity(3, 2));
  single.valid = {false, true, false};
  Matrix r(2, 2);
  r << 0.3, -0.9, 1, 1;
  const SoftPseudoLabels one = soft_pseudo_labels(r, single);
  for (Index i = 0; i < 2; ++i) {
    EXPECT_EQ(one.y_hat(i, 1), 1.0);
    EXPECT_EQ(one.y_hat(i, 0), 0.0);
    EXPECT_EQ(one.y_hat(i, 2), 0.0);
  }
}

TEST(SoftPseudoLabels, RowStochasticAndMatchesOracle) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix r = random_matrix(8, 4, rng);
    ClassCenters c = all_valid(random_matrix(5, 4, rng));
    c.valid[static_cast<std::size_t>(trial % 5)] = false;
    const SoftPseudoLabels y = soft_pseudo_labels(r, c);
    EXPECT_LT((y.y_hat - testing::brute_soft_labels(r, c.centers, c.valid)).cwiseAbs().maxCoeff(), 1e-12);
    for (Index i = 0; i < 8; ++i) {
      EXPECT_NEAR(y.y_hat.row(i).sum(), 1.0, 1e-12);
      EXPECT_GE(y.y_hat.row(i).minCoeff(), 0.0);
      EXPECT_LE(y.y_hat.row(i).maxCoeff(), 1.0);
    }
  }
}

TEST(SoftPseudoLabels, DegenerateRowsAreFlagged) {
  Matrix r(2, 2);
  r << 0, 0, 1, 0;
  const SoftPseudoLabels y = soft_pseudo_labels(r, all_valid(Matrix::Identity(2, 2)));
  EXPECT_EQ(y.degenerate, std::vector<bool>({true, false}));
  EXPECT_EQ(y.y_hat(0, 0), 0.5);
  EXPECT_EQ(y.y_hat(0, 1), 0.5);
}

TEST(SoftPseudoLabels, NoValidCenterThrows) {
  ClassCenters c = all_valid(Matrix::Identity(2, 2));
  c.valid = {false, false};
  EXPECT_THROW(soft_pseudo_labels(Matrix::Ones(1, 2), c), Error);
}

TEST(K2Cutoff, CeilingRule) {
  EXPECT_EQ(k2_cutoff(1.0, 8), 8u);
  EXPECT_EQ(k2_cutoff(0.5, 8), 4u);
  EXPECT_EQ(k2_cutoff(0.01, 8), 1u);
  EXPECT_EQ(k2_cutoff(0.9, 10), 9u);
  EXPECT_EQ(k2_cutoff(0.9, 128), 116u);
}

SoftPseudoLabels labels_from(const std::vector<int>& cls, Index num_classes) {
  SoftPseudoLabels out{Matrix::Zero(static_cast<Index>(cls.size()), num_classes),
                       std::vector<bool>(cls.size(), false)};
  for (std::size_t i = 0; i < cls.size(); ++i) out.y_hat(static_cast<Index>(i), cls[i]) = 1.0;
  return out;
}

TEST(ConsistencyFilter, Examples) {
  const Matrix logits = class_logits({0, 1, 0, 1}, {3, 2, 1, 4}, 2);
  const EntropyScores h = entropy(logits);
  std::vector<Index> all{0, 1, 2, 3};
  EXPECT_EQ(consistency_filter(h, logits, labels_from({0, 1, 0, 1}, 2), 1.0), all);
  EXPECT_TRUE(consistency_filter(h, logits, labels_from({1, 0, 1, 0}, 2), 1.0).empty());
  EXPECT_THROW(consistency_filter(h, logits, labels_from({0, 1, 0, 1}, 2), 0.0), Error);
  EXPECT_THROW(consistency_filter(h, logits, labels_from({0, 1, 0, 1}, 2), 1.5), Error);
}

TEST(ConsistencyFilter, MatchesBruteForceOracle) {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix logits = random_matrix(8, 3, rng, -3, 3);
    const EntropyScores h = entropy(logits);
    SoftPseudoLabels y{random_matrix(8, 3, rng, 0, 1), std::vector<bool>(8, false)};
    EXPECT_EQ(consistency_filter(h, logits, y, 0.5), testing::brute_consistency(h.h, logits, y.y_hat, 0.5));
  }
}

TEST(ConsistencyFilter, MonotoneInK2) {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix logits = random_matrix(20, 4, rng, -3, 3);
    const EntropyScores h = entropy(logits);
    SoftPseudoLabels y{random_matrix(20, 4, rng, 0, 1), std::vector<bool>(20, false)};
    std::vector<Index> prev;
    for (double k2 : {0.05, 0.2, 0.35, 0.5, 0.75, 0.9, 1.0}) {
      const auto cur = consistency_filter(h, logits, y, k2);
      EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
      prev = cur;
    }
  }
}

TEST(ConsistencyFilter, DegenerateRowsExcluded) {
  const Matrix logits = class_logits({0, 1}, {3, 3}, 2);
  SoftPseudoLabels y = labels_from({0, 1}, 2);
  y.degenerate[0] = true;
  EXPECT_EQ(consistency_filter(entropy(logits), logits, y, 1.0), std::vector<Index>({1}));
}

TEST(Filters, InputsUntouched) {
  std::mt19937_64 rng(36);
  const Matrix logits = random_matrix(12, 3, rng, -3, 3);
  const Matrix copy = logits;
  const EntropyScores h = entropy(logits);
  const auto sel = topk_per_class(h, logits, 2);
  const Matrix r = random_matrix(12, 4, rng);
  const ClassCenters c = class_centers(r, logits, sel);
  const SoftPseudoLabels y = soft_pseudo_labels(r, c);
  consistency_filter(h, logits, y, 0.9);
  EXPECT_EQ(logits, copy);
}

}  // namespace
}  // namespace fret
