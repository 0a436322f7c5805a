// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "fret/redundancy.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

namespace fret {
namespace {

Matrix m22(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

TEST(ColumnNormalize, Examples) {
  const Matrix a = column_normalize(m22(3, 0, 4, 0));
  EXPECT_DOUBLE_EQ(a(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(a(1, 0), 0.8);
  EXPECT_EQ(a(0, 1), 0.0);
  EXPECT_EQ(a(1, 1), 0.0);

  EXPECT_EQ(column_normalize(Matrix::Identity(2, 2)), Matrix::Identity(2, 2));

  const Matrix b = column_normalize(m22(1, 1, 0, 1));
  EXPECT_NEAR(b(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(b(0, 1), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(b(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(b(1, 1), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(RedundancyScore, Examples) {
  EXPECT_EQ(redundancy_score(Matrix::Identity(2, 2)).value, 0.0);
  EXPECT_NEAR(redundancy_score(m22(1, 1, 0, 1)).value, std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(redundancy_score(m22(2, 2, 5, 5)).value, 2.0, 1e-12);

  const auto s = redundancy_score(Matrix::Ones(5, 3));
  EXPECT_EQ(s.dim, 3);
  EXPECT_EQ(s.batch_size, 5);
}

TEST(RedundancyScore, ZeroColumnContributesNothing) {
  Matrix z(3, 3);
  z << 1, 0, 1, 2, 0, 2, 3, 0, 3;
  // Columns 0 and 2 are parallel: two off-diagonal entries of 1.
  EXPECT_NEAR(redundancy_score(z).value, 2.0, 1e-12);
}

TEST(RedundancyScore, MatchesBruteForceOracle) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> nd(1, 16), dd(1, 8);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix z = testing::random_matrix(nd(rng), dd(rng), rng);
    EXPECT_NEAR(redundancy_score(z).value, testing::brute_force_redundancy(z), 1e-6);
  }
}

TEST(RedundancyScore, Bounds) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const Index d = 1 + trial % 7;
    const Matrix z = testing::random_matrix(6, d, rng);
    const double v = redundancy_score(z).value;
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, static_cast<double>(d * (d - 1)) + 1e-9);
  }
}

TEST(RedundancyScore, PermutationAndScaleInvariance) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> pos(0.1, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix z = testing::random_matrix(9, 5, rng);
    std::vector<Index> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix permuted(9, 5), scaled = z;
    for (Index j = 0; j < 5; ++j) {
      permuted.col(j) = z.col(perm[j]);
      scaled.col(j) *= pos(rng);
    }
    const double base = redundancy_score(z).value;
    EXPECT_NEAR(redundancy_score(permuted).value, base, 1e-10);
    EXPECT_NEAR(redundancy_score(scaled).value, base, 1e-10);
  }
}

TEST(RedundancyScore, GramSymmetry) {
  std::mt19937_64 rng(14);
  const Matrix zn = column_normalize(testing::random_matrix(7, 4, rng));
  const Matrix gram = zn.transpose() * zn;
  EXPECT_NEAR((gram - gram.transpose()).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(SfretLoss, ForwardMatchesScore) {
  Tensor id = Tensor::parameter(Matrix::Identity(2, 2));
  Tensor loss = sfret_loss(id);
  EXPECT_EQ(loss.item(), 0.0);
  backward(loss);
  ASSERT_TRUE(id.has_grad());
  EXPECT_TRUE(id.grad().allFinite());

  EXPECT_NEAR(sfret_loss(Tensor::constant(m22(1, 1, 0, 1))).item(), std::sqrt(2.0), 1e-12);

  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix z = testing::random_matrix(6, 4, rng);
    const double expected = redundancy_score(z).value;
    EXPECT_LE(std::abs(sfret_loss(Tensor::constant(z)).item() - expected), 1e-6 * std::max(1.0, expected));
  }
}

TEST(SfretLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix z = testing::random_matrix(4, 3, rng);
    EXPECT_LT(testing::gradient_error([](const Tensor& x) { return sfret_loss(x); }, z), 1e-4);
  }
}

TEST(SfretLoss, NonFiniteInputThrows) {
  Matrix z = Matrix::Ones(2, 2);
  z(0, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    sfret_loss(Tensor::constant(z));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonFiniteLoss);
  }
}

TEST(NrsTrace, Examples) {
  NrsTrace t;
  t.record(0, 2.0);
  EXPECT_EQ(t.normalized(), std::vector<double>({1.0}));
  t.record(1, 1.0);
  EXPECT_EQ(t.normalized(), std::vector<double>({1.0, 0.5}));

  NrsTrace c;
  c.record(0, 2.0);
  c.record(3, 2.0);
  EXPECT_EQ(c.normalized(), std::vector<double>({1.0, 1.0}));
  EXPECT_EQ(c.steps(), std::vector<long>({0, 3}));
}

TEST(NrsTrace, StepsMustIncrease) {
  NrsTrace t;
  t.record(2, 1.0);
  EXPECT_THROW(t.record(2, 1.0), Error);
  EXPECT_THROW(t.record(1, 1.0), Error);
}

TEST(NrsTrace, EmptyBaselineYieldsZeros) {
  NrsTrace t = nrs_update(NrsTrace(), 0, Matrix::Identity(3, 3));
  t = nrs_update(std::move(t), 1, Matrix::Ones(3, 3));
  EXPECT_TRUE(t.empty_baseline());
  EXPECT_EQ(t.normalized(), std::vector<double>({0.0, 0.0}));
  EXPECT_EQ(t.raw().size(), t.steps().size());
}

TEST(NrsTrace, CsvColumns) {
  NrsTrace t;
  t.record(0, 4.0);
  t.record(1, 3.0);
  std::ostringstream os;
  t.write_csv(os);
  EXPECT_EQ(os.str(), "step,raw,normalized\n0,4,1\n1,3,0.75\n");
}

}  // namespace
}  // namespace fret
