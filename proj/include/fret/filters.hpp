// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reliability filters: entropy scoring, per-class lowest-entropy selection
// for centers, soft pseudo-labels from center similarity, and the
// entropy-plus-consistency filter applied before computing losses.
//
// Entropy ties are always broken by ascending sample index.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fret/objectives.hpp"

namespace fret {

struct EntropyScores {
  std::vector<double> h;  // nats

  std::size_t size() const { return h.size(); }
};

inline EntropyScores entropy(const Matrix& logits) {
  FRET_CHECK(logits.rows() >= 1, ErrorKind::kShapeMismatch, "entropy: empty batch");
  const Matrix log_p = log_softmax_rows(logits);
  EntropyScores out;
  out.h.resize(static_cast<std::size_t>(logits.rows()));
  for (Index i = 0; i < logits.rows(); ++i) {
    double h = 0.0;
    for (Index c = 0; c < logits.cols(); ++c) h -= std::exp(log_p(i, c)) * log_p(i, c);
    out.h[static_cast<std::size_t>(i)] = std::max(h, 0.0);
  }
  return out;
}

namespace detail {

// Indices sorted by (entropy, index).
inline std::vector<Index> entropy_order(const EntropyScores& h, const std::vector<Index>& among) {
  std::vector<Index> order = among;
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double ha = h.h[static_cast<std::size_t>(a)];
    const double hb = h.h[static_cast<std::size_t>(b)];
    return ha < hb || (ha == hb && a < b);
  });
  return order;
}

inline std::vector<Index> all_indices(std::size_t n) {
  std::vector<Index> out(n);
  std::iota(out.begin(), out.end(), Index{0});
  return out;
}

}  // namespace detail

// Union over predicted classes of the min(K1, class size) lowest-entropy
// samples, returned in ascending index order.
inline std::vector<Index> topk_per_class(const EntropyScores& h, const Matrix& logits, long k1) {
  FRET_CHECK(k1 >= 1, ErrorKind::kInvalidArgument, "K1 must be positive");
  FRET_CHECK(static_cast<Index>(h.size()) == logits.rows(), ErrorKind::kShapeMismatch, "topk_per_class: size");
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(logits.cols()));
  for (Index i = 0; i < logits.rows(); ++i) by_class[static_cast<std::size_t>(argmax_row(logits, i))].push_back(i);
  std::vector<Index> out;
  for (const auto& members : by_class) {
    const auto order = detail::entropy_order(h, members);
    const auto keep = std::min<std::size_t>(order.size(), static_cast<std::size_t>(k1));
    out.insert(out.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct SoftPseudoLabels {
  Matrix y_hat;                 // n x C, row-stochastic
  std::vector<bool> degenerate;  // representation had no direction
};

// Softmax over cosine similarity to each valid center; invalid classes get 0.
// A degenerate representation row receives the uniform distribution over
// valid classes and is flagged.
inline SoftPseudoLabels soft_pseudo_labels(const Matrix& attention_repr, const ClassCenters& centers) {
  const auto valid = centers.valid_classes();
  FRET_CHECK(!valid.empty(), ErrorKind::kEmptySelection, "soft_pseudo_labels: no valid centers");
  FRET_CHECK(attention_repr.cols() == centers.centers.cols(), ErrorKind::kShapeMismatch,
             "soft_pseudo_labels: width mismatch");
  SoftPseudoLabels out{Matrix::Zero(attention_repr.rows(), centers.num_classes()),
                       std::vector<bool>(static_cast<std::size_t>(attention_repr.rows()), false)};
  std::vector<double> sims(valid.size());
  for (Index i = 0; i < attention_repr.rows(); ++i) {
    const double rn = attention_repr.row(i).norm();
    bool degenerate = rn < kMinDirectionNorm;
    for (std::size_t k = 0; k < valid.size() && !degenerate; ++k) {
      const double cn = centers.centers.row(valid[k]).norm();
      if (cn < kMinDirectionNorm) {
        degenerate = true;
        break;
      }
      sims[k] = attention_repr.row(i).dot(centers.centers.row(valid[k])) / (rn * cn);
    }
    if (degenerate) {
      out.degenerate[static_cast<std::size_t>(i)] = true;
      for (Index j : valid) out.y_hat(i, j) = 1.0 / static_cast<double>(valid.size());
      continue;
    }
    const double mx = *std::max_element(sims.begin(), sims.end());
    double z = 0.0;
    for (double s : sims) z += std::exp(s - mx);
    for (std::size_t k = 0; k < valid.size(); ++k) out.y_hat(i, valid[k]) = std::exp(sims[k] - mx) / z;
  }
  return out;
}

// Number of lowest-entropy candidates admitted for fraction k2 of n samples.
inline std::size_t k2_cutoff(double k2, std::size_t n) {
  const double raw = k2 * static_cast<double>(n);
  return std::min(n, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
}

// Samples among the ceil(K2 * n) lowest-entropy ones whose prediction agrees
// with their pseudo-label, in ascending index order.
inline std::vector<Index> consistency_filter(const EntropyScores& h, const Matrix& logits,
                                             const SoftPseudoLabels& labels, double k2) {
  FRET_CHECK(k2 > 0.0 && k2 <= 1.0, ErrorKind::kInvalidArgument, "K2 must lie in (0, 1]");
  const auto n = static_cast<std::size_t>(logits.rows());
  FRET_CHECK(h.size() == n && static_cast<std::size_t>(labels.y_hat.rows()) == n, ErrorKind::kShapeMismatch,
             "consistency_filter: size mismatch");
  auto order = detail::entropy_order(h, detail::all_indices(n));
  order.resize(k2_cutoff(k2, n));
  std::vector<Index> out;
  for (Index i : order) {
    if (labels.degenerate[static_cast<std::size_t>(i)]) continue;
    if (argmax_row(logits, i) == argmax_row(labels.y_hat, i)) out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace fret
