// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
//
// Losses of the graph-based method: prototype contrast between attention and
// redundancy representations, entropy/negative learning on the prediction
// layer, and their weighted combination.
#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "fret/autograd.hpp"

namespace fret {

// Vectors shorter than this have no defined direction.
inline constexpr double kMinDirectionNorm = 1e-12;

inline Index argmax_row(const Matrix& m, Index row) {
  Index best = 0;
  for (Index j = 1; j < m.cols(); ++j) {
    if (m(row, j) > m(row, best)) best = j;
  }
  return best;
}

inline std::vector<Index> argmax_rows(const Matrix& m) {
  std::vector<Index> out(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax_row(m, i);
  return out;
}

struct ClassCenters {
  Matrix centers;            // C x d
  std::vector<bool> valid;   // class had at least one contributing sample
  std::vector<long> counts;  // contributing samples per class

  Index num_classes() const { return centers.rows(); }
  std::vector<Index> valid_classes() const {
    std::vector<Index> out;
    for (std::size_t j = 0; j < valid.size(); ++j) {
      if (valid[j]) out.push_back(static_cast<Index>(j));
    }
    return out;
  }
};

// Mean embedding per predicted class over the `selected` samples.
inline ClassCenters class_centers(const Matrix& z, const Matrix& logits, const std::vector<Index>& selected) {
  FRET_CHECK(!selected.empty(), ErrorKind::kEmptySelection, "class_centers: no samples selected");
  FRET_CHECK(z.rows() == logits.rows(), ErrorKind::kShapeMismatch, "class_centers: embeddings/logits row mismatch");
  const Index num_classes = logits.cols();
  ClassCenters out{Matrix::Zero(num_classes, z.cols()), std::vector<bool>(num_classes, false),
                   std::vector<long>(num_classes, 0)};
  for (Index i : selected) {
    FRET_CHECK(i >= 0 && i < z.rows(), ErrorKind::kShapeMismatch, "class_centers: index out of range");
    const Index j = argmax_row(logits, i);
    out.centers.row(j) += z.row(i);
    ++out.counts[static_cast<std::size_t>(j)];
  }
  for (Index j = 0; j < num_classes; ++j) {
    const long count = out.counts[static_cast<std::size_t>(j)];
    if (count > 0) {
      out.centers.row(j) /= static_cast<double>(count);
      out.valid[static_cast<std::size_t>(j)] = true;
    }
  }
  return out;
}

struct ContrastiveTerms {
  Tensor loss;                 // scalar
  std::vector<Index> used;     // rows that contributed
  std::vector<Index> skipped;  // rows with an undefined cosine
};

// Sum over samples of -log(e^{s(a_i,c_o)} / (sum_j e^{s(a_i,c_j)} + e^{s(a_i,r_i)}))
// with cosine similarity s, centers treated as constants and the class sum
// restricted to valid centers.
inline ContrastiveTerms contrastive_terms(const Tensor& attention, const Tensor& redundancy,
                                          const ClassCenters& centers, const std::vector<Index>& assign) {
  FRET_CHECK(attention.rows() == redundancy.rows() && attention.cols() == redundancy.cols(),
             ErrorKind::kShapeMismatch, "contrastive_loss: representation shapes differ");
  FRET_CHECK(static_cast<Index>(assign.size()) == attention.rows(), ErrorKind::kShapeMismatch,
             "contrastive_loss: one assignment per sample");
  FRET_CHECK(centers.centers.cols() == attention.cols(), ErrorKind::kShapeMismatch,
             "contrastive_loss: center width");

  std::vector<Index> usable;
  std::vector<Index> column_of(static_cast<std::size_t>(centers.num_classes()), -1);
  for (Index j : centers.valid_classes()) {
    if (centers.centers.row(j).norm() >= kMinDirectionNorm) {
      column_of[static_cast<std::size_t>(j)] = static_cast<Index>(usable.size());
      usable.push_back(j);
    }
  }

  ContrastiveTerms out;
  std::vector<Index> positive;
  for (Index i = 0; i < attention.rows(); ++i) {
    const Index o = assign[static_cast<std::size_t>(i)];
    const bool ok = o >= 0 && o < centers.num_classes() && column_of[static_cast<std::size_t>(o)] >= 0 &&
                    attention.value().row(i).norm() >= kMinDirectionNorm &&
                    redundancy.value().row(i).norm() >= kMinDirectionNorm;
    if (ok) {
      out.used.push_back(i);
      positive.push_back(column_of[static_cast<std::size_t>(o)]);
    } else {
      out.skipped.push_back(i);
    }
  }
  if (out.used.empty()) {
    out.loss = Tensor::constant(Matrix::Zero(1, 1));
    return out;
  }

  Matrix unit_centers(static_cast<Index>(usable.size()), centers.centers.cols());
  for (std::size_t k = 0; k < usable.size(); ++k) {
    unit_centers.row(static_cast<Index>(k)) = centers.centers.row(usable[k]).normalized();
  }
  Tensor a = row_normalize(select_rows(attention, out.used), kMinDirectionNorm);
  Tensor r = row_normalize(select_rows(redundancy, out.used), kMinDirectionNorm);
  Tensor to_centers = matmul(a, Tensor::constant(unit_centers.transpose()));
  Tensor to_redundant = row_sum(mul(a, r));
  Tensor log_prob = log_softmax(hconcat(to_centers, to_redundant));
  out.loss = scale(sum(pick(log_prob, positive)), -1.0);
  return out;
}

inline Tensor contrastive_loss(const Tensor& attention, const Tensor& redundancy, const ClassCenters& centers,
                               const std::vector<Index>& assign) {
  return contrastive_terms(attention, redundancy, centers, assign).loss;
}

struct PredictionTerms {
  Tensor entropy;   // -sum softmax(P_A) log softmax(P_A)
  Tensor negative;  // -sum softmax(P_R) log softmax(1 - P_A)
};

inline PredictionTerms prediction_loss(const Tensor& attention_logits, const Tensor& redundancy_logits) {
  FRET_CHECK(attention_logits.rows() == redundancy_logits.rows() &&
                 attention_logits.cols() == redundancy_logits.cols(),
             ErrorKind::kShapeMismatch, "prediction_loss: logit shapes differ");
  FRET_CHECK(attention_logits.rows() >= 1, ErrorKind::kShapeMismatch, "prediction_loss: empty batch");
  FRET_CHECK(attention_logits.value().allFinite() && redundancy_logits.value().allFinite(),
             ErrorKind::kNonFiniteLoss, "prediction_loss: non-finite logits");
  Tensor log_pa = log_softmax(attention_logits);
  Tensor entropy = scale(sum(mul(exp(log_pa), log_pa)), -1.0);
  Tensor log_complement = log_softmax(add_scalar(scale(attention_logits, -1.0), 1.0));
  Tensor pr = exp(log_softmax(redundancy_logits));
  Tensor negative = scale(sum(mul(pr, log_complement)), -1.0);
  return {std::move(entropy), std::move(negative)};
}

struct LossBreakdown {
  double l_r = 0.0;
  double l_p_entropy = 0.0;
  double l_p_negative = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

struct GfretLoss {
  Tensor total;
  LossBreakdown breakdown;
  std::vector<Index> contrastive_skipped;
};

inline GfretLoss gfret_loss(const Tensor& attention_repr, const Tensor& redundancy_repr, const Tensor& attention_pred,
                            const Tensor& redundancy_pred, const ClassCenters& centers,
                            const std::vector<Index>& assign, double lambda) {
  FRET_CHECK(lambda >= 0.0, ErrorKind::kInvalidArgument, "lambda must be nonnegative");
  ContrastiveTerms lr = contrastive_terms(attention_repr, redundancy_repr, centers, assign);
  PredictionTerms lp = prediction_loss(attention_pred, redundancy_pred);
  Tensor total = add(lr.loss, scale(add(lp.entropy, lp.negative), lambda));
  GfretLoss out;
  out.breakdown = {lr.loss.item(), lp.entropy.item(), lp.negative.item(), total.item(), lambda};
  out.total = std::move(total);
  out.contrastive_skipped = std::move(lr.skipped);
  return out;
}

}  // namespace fret
