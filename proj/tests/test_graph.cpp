// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "fret/graph.hpp"
#include "support/gradcheck.hpp"

namespace fret {
namespace {

using testing::random_matrix;

Matrix m22(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

FeatureGraph graph_of(const Matrix& m) { return {Tensor::constant(m), GraphRole::kFeature}; }

nn::Linear make_head(Index d, Index c, std::mt19937_64& rng) {
  return nn::Linear("head", Tensor::parameter(random_matrix(d, c, rng)), Tensor::parameter(random_matrix(1, c, rng)));
}

TEST(FeatureGraph, Examples) {
  EXPECT_EQ(feature_graph(Tensor::constant(Matrix::Identity(2, 2))).value(), Matrix::Identity(2, 2));
  EXPECT_EQ(feature_graph(Tensor::constant(m22(1, 1, 0, 1))).value(), m22(1, 1, 1, 2));
  EXPECT_EQ(feature_graph(Tensor::constant(Matrix::Zero(3, 2))).value(), Matrix::Zero(2, 2));
}

TEST(FeatureGraph, SymmetricWithNonnegativeDiagonal) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix g = feature_graph(Tensor::constant(random_matrix(5, 4, rng))).value();
    EXPECT_EQ(g, g.transpose());
    EXPECT_GE(g.diagonal().minCoeff(), 0.0);
  }
}

TEST(Decompose, Examples) {
  const Matrix gf = m22(1, 1, 1, 2);
  GraphPair p = decompose(graph_of(gf), MaskMatrix::identity(2));
  EXPECT_EQ(p.attention.value(), m22(1, 0, 0, 2));
  EXPECT_EQ(p.redundancy.value(), m22(0, 1, 1, 0));

  p = decompose(graph_of(gf), MaskMatrix::custom(Matrix::Ones(2, 2)));
  EXPECT_EQ(p.attention.value(), gf);
  EXPECT_EQ(p.redundancy.value(), Matrix::Zero(2, 2));

  p = decompose(graph_of(gf), MaskMatrix::custom(Matrix::Zero(2, 2)));
  EXPECT_EQ(p.attention.value(), Matrix::Zero(2, 2));
  EXPECT_EQ(p.redundancy.value(), gf);
}

TEST(Decompose, ShapeMismatchThrows) {
  try {
    decompose(graph_of(Matrix::Identity(3, 3)), MaskMatrix::identity(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShapeMismatch);
  }
}

TEST(MaskMatrix, RejectsAsymmetric) {
  EXPECT_THROW(MaskMatrix::custom(m22(1, 1, 0, 1)), Error);
  EXPECT_THROW(MaskMatrix::custom(Matrix::Ones(2, 3)), Error);
  EXPECT_EQ(MaskMatrix::identity(3).kind(), MaskMatrix::Kind::kIdentity);
}

TEST(Decompose, ExactAdditivityAndSymmetry) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const FeatureGraph g = feature_graph(Tensor::constant(random_matrix(6, 5, rng)));
    Matrix mask(5, 5);
    for (Index i = 0; i < 5; ++i) {
      for (Index j = 0; j <= i; ++j) mask(i, j) = mask(j, i) = static_cast<double>(rng() % 2);
    }
    const GraphPair p = decompose(g, MaskMatrix::custom(mask));
    const Matrix sum = p.attention.value() + p.redundancy.value();
    EXPECT_EQ(sum, g.value());

    Matrix soft = random_matrix(5, 5, rng);
    soft = (soft + soft.transpose()).eval();
    const GraphPair q = decompose(g, MaskMatrix::custom(soft));
    const Matrix soft_sum = q.attention.value() + q.redundancy.value();
    EXPECT_LT((soft_sum - g.value()).cwiseAbs().maxCoeff(), 1e-14 * g.value().cwiseAbs().maxCoeff());
    EXPECT_EQ(p.attention.value(), p.attention.value().transpose());
    EXPECT_EQ(p.redundancy.value(), p.redundancy.value().transpose());
  }
}

TEST(NormalizeGraph, Examples) {
  EXPECT_LT((normalize_graph(graph_of(m22(1, 0, 0, 2))).value() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(),
            1e-6);
  EXPECT_LT((normalize_graph(graph_of(m22(0, 1, 1, 0))).value() - m22(0, 1, 1, 0)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_EQ(normalize_graph(graph_of(Matrix::Zero(2, 2))).value(), Matrix::Zero(2, 2));
}

TEST(NormalizeGraph, MatchesDirectFormula) {
  std::mt19937_64 rng(3);
  Matrix g = random_matrix(4, 4, rng);
  g = (g + g.transpose()).eval();
  Eigen::VectorXd dinv(4);
  for (Index i = 0; i < 4; ++i) dinv(i) = 1.0 / std::sqrt(g.row(i).cwiseAbs().sum() + kDegreeEpsilon);
  const Matrix expected = dinv.asDiagonal() * g * dinv.asDiagonal();
  EXPECT_LT((normalize_graph(graph_of(g)).value() - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(NormalizeGraph, PreservesSymmetry) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const FeatureGraph g = feature_graph(Tensor::constant(random_matrix(7, 6, rng)));
    for (const auto& part : {g, decompose(g, MaskMatrix::identity(6)).redundancy}) {
      const Matrix n = normalize_graph(part).value();
      EXPECT_LT((n - n.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Propagate, IdentityMaskCollapse) {
  std::mt19937_64 rng(5);
  const nn::Linear head = make_head(4, 3, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix z = random_matrix(8, 4, rng);
    Tensor zt = Tensor::constant(z);
    const PropagatedBatch out = propagate(zt, decompose(feature_graph(zt), MaskMatrix::identity(4)), head);
    EXPECT_LT((out.attention_repr.value() - z).cwiseAbs().maxCoeff(), 1e-5 * z.cwiseAbs().maxCoeff());
  }
}

TEST(Propagate, RedundancyExample) {
  std::mt19937_64 rng(6);
  const nn::Linear head = make_head(2, 3, rng);
  Tensor z = Tensor::constant(m22(1, 1, 0, 1));
  GraphPair pair{graph_of(Matrix::Identity(2, 2)), graph_of(m22(0, 1, 1, 0)), graph_of(m22(1, 1, 1, 1))};
  const PropagatedBatch out = propagate(z, pair, head);
  EXPECT_LT((out.redundancy_repr.value() - m22(1, 1, 1, 0)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Propagate, ZeroInputGivesBiasOnly) {
  std::mt19937_64 rng(7);
  const nn::Linear head = make_head(3, 2, rng);
  Tensor z = Tensor::constant(Matrix::Zero(4, 3));
  const GraphPair pair = decompose(feature_graph(z), MaskMatrix::identity(3));
  const PropagatedBatch with = propagate(z, pair, head, true);
  const PropagatedBatch without = propagate(z, pair, head, false);
  EXPECT_EQ(with.attention_repr.value(), Matrix::Zero(4, 3));
  EXPECT_EQ(with.redundancy_repr.value(), Matrix::Zero(4, 3));
  for (Index i = 0; i < 4; ++i) {
    EXPECT_EQ(with.attention_pred.value().row(i), head.bias().value());
    EXPECT_EQ(with.redundancy_pred.value().row(i), head.bias().value());
  }
  EXPECT_EQ(without.attention_pred.value(), Matrix::Zero(4, 2));
  EXPECT_EQ(without.redundancy_pred.value(), Matrix::Zero(4, 2));
}

TEST(Propagate, PredictionsAreHeadOfRepresentations) {
  std::mt19937_64 rng(8);
  const nn::Linear head = make_head(5, 4, rng);
  Tensor z = Tensor::constant(random_matrix(6, 5, rng));
  const PropagatedBatch out = propagate(z, decompose(feature_graph(z), MaskMatrix::identity(5)), head);
  const Matrix w = head.weight().value();
  const Matrix b = head.bias().value();
  const Matrix pa = (out.attention_repr.value() * w).rowwise() + b.row(0);
  const Matrix pr = (out.redundancy_repr.value() * w).rowwise() + b.row(0);
  EXPECT_LT((out.attention_pred.value() - pa).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((out.redundancy_pred.value() - pr).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Propagate, ShapeMismatchThrows) {
  std::mt19937_64 rng(9);
  const nn::Linear head = make_head(3, 2, rng);
  Tensor z = Tensor::constant(random_matrix(4, 3, rng));
  const GraphPair wrong = decompose(graph_of(Matrix::Identity(2, 2)), MaskMatrix::identity(2));
  EXPECT_THROW(propagate(z, wrong, head), Error);
}

TEST(Propagate, GradientThroughWholePipeline) {
  std::mt19937_64 rng(10);
  const nn::Linear head = make_head(3, 2, rng);
  Matrix mask = random_matrix(3, 3, rng);
  mask = (mask + mask.transpose()).eval();
  const Matrix wa = random_matrix(4, 3, rng), wr = random_matrix(4, 3, rng);
  const Matrix wpa = random_matrix(4, 2, rng), wpr = random_matrix(4, 2, rng);
  for (const auto& m : {MaskMatrix::identity(3), MaskMatrix::custom(mask)}) {
    auto f = [&](const Tensor& z) {
      const PropagatedBatch out = propagate(z, decompose(feature_graph(z), m), head);
      Tensor s = add(sum(mul(out.attention_repr, Tensor::constant(wa))), sum(mul(out.redundancy_repr, Tensor::constant(wr))));
      s = add(s, sum(mul(out.attention_pred, Tensor::constant(wpa))));
      return add(s, sum(mul(out.redundancy_pred, Tensor::constant(wpr))));
    };
    for (int trial = 0; trial < 5; ++trial) {
      EXPECT_LT(testing::gradient_error(f, random_matrix(4, 3, rng)), 1e-4);
    }
  }
}

}  // namespace
}  // namespace fret
