// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
//
// Second-order feature relation graph, its mask decomposition into attention
// and redundancy parts, and one-layer graph propagation through each part.
#pragma once

#include <string>
#include <utility>

#include "fret/autograd.hpp"
#include "fret/model.hpp"

namespace fret {

// Added to every degree so that isolated features stay finite.
inline constexpr double kDegreeEpsilon = 1e-8;

enum class GraphRole { kFeature, kAttention, kRedundancy, kNormalized };

struct FeatureGraph {
  Tensor matrix;  // d x d, symmetric
  GraphRole role = GraphRole::kFeature;

  Index dim() const { return matrix.rows(); }
  const Matrix& value() const { return matrix.value(); }
};

class MaskMatrix {
 public:
  enum class Kind { kIdentity, kCustom };

  static MaskMatrix identity(Index d) { return MaskMatrix(Matrix::Identity(d, d), Kind::kIdentity); }

  static MaskMatrix custom(Matrix m) {
    FRET_CHECK(m.rows() == m.cols(), ErrorKind::kShapeMismatch, "mask must be square");
    FRET_CHECK(m == m.transpose(), ErrorKind::kInvalidArgument, "mask must be symmetric");
    return MaskMatrix(std::move(m), Kind::kCustom);
  }

  const Matrix& value() const { return m_; }
  Kind kind() const { return kind_; }
  Index dim() const { return m_.rows(); }

 private:
  MaskMatrix(Matrix m, Kind kind) : m_(std::move(m)), kind_(kind) {}
  Matrix m_;
  Kind kind_;
};

struct GraphPair {
  FeatureGraph attention;
  FeatureGraph redundancy;
  FeatureGraph source;
};

struct PropagatedBatch {
  Tensor attention_repr;   // n x d
  Tensor attention_pred;   // n x C
  Tensor redundancy_repr;  // n x d
  Tensor redundancy_pred;  // n x C
};

// G_F = Z^T Z on raw (unnormalized) embeddings.
inline FeatureGraph feature_graph(const Tensor& z) {
  FRET_CHECK(z.rows() >= 1, ErrorKind::kShapeMismatch, "feature_graph: empty batch");
  return {matmul(transpose(z), z), GraphRole::kFeature};
}

inline GraphPair decompose(const FeatureGraph& g, const MaskMatrix& mask) {
  FRET_CHECK(g.dim() == mask.dim() && g.matrix.cols() == mask.dim(), ErrorKind::kShapeMismatch,
             "decompose: graph is " + std::to_string(g.dim()) + "x" + std::to_string(g.matrix.cols()) +
                 ", mask is " + std::to_string(mask.dim()));
  Tensor attention = mul(g.matrix, Tensor::constant(mask.value()));
  Tensor redundancy = sub(g.matrix, attention);
  return {{attention, GraphRole::kAttention}, {redundancy, GraphRole::kRedundancy}, g};
}

// D^{-1/2} G D^{-1/2} with D_ii = sum_j |G_ij| + eps. Absolute degrees keep
// the normalization defined for signed graphs.
inline FeatureGraph normalize_graph(const FeatureGraph& g, double eps = kDegreeEpsilon) {
  FRET_CHECK(g.dim() >= 1 && g.matrix.cols() == g.dim(), ErrorKind::kShapeMismatch, "normalize_graph: not square");
  Tensor inv_sqrt_degree = pow(add_scalar(row_sum(abs(g.matrix)), eps), -0.5);  // d x 1
  Tensor scaled = mul_col(mul_row(g.matrix, transpose(inv_sqrt_degree)), inv_sqrt_degree);
  return {scaled, GraphRole::kNormalized};
}

inline PropagatedBatch propagate(const Tensor& z, const GraphPair& pair, const nn::Linear& head,
                                 bool with_bias = true) {
  FRET_CHECK(z.cols() == pair.attention.dim() && z.cols() == pair.redundancy.dim(), ErrorKind::kShapeMismatch,
             "propagate: embedding width does not match graph dimension");
  Tensor ra = matmul(z, normalize_graph(pair.attention).matrix);
  Tensor rr = matmul(z, normalize_graph(pair.redundancy).matrix);
  Tensor pa = head.apply(ra, with_bias);
  Tensor pr = head.apply(rr, with_bias);
  return {std::move(ra), std::move(pa), std::move(rr), std::move(pr)};
}

}  // namespace fret
