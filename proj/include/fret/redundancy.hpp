// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
//
// Feature redundancy: the entrywise L1 norm of the off-diagonal part of the
// Gram matrix of column-normalized embeddings, its differentiable form, and
// the normalized redundancy trace recorded during adaptation.
#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "fret/autograd.hpp"

namespace fret {

struct RedundancyScore {
  double value = 0.0;
  Index dim = 0;
  Index batch_size = 0;
};

// Unit-norm columns; exactly-zero columns are left zero.
inline Matrix column_normalize(const Matrix& z) {
  Matrix out = z;
  for (Index j = 0; j < z.cols(); ++j) {
    const double norm = z.col(j).norm();
    if (norm > 0.0) {
      out.col(j) /= norm;
    } else {
      out.col(j).setZero();
    }
  }
  return out;
}

namespace detail {

inline Matrix off_diagonal_mask(Index d) {
  Matrix m = Matrix::Ones(d, d);
  m.diagonal().setZero();
  return m;
}

inline void require_finite(const Matrix& m, const char* what) {
  FRET_CHECK(m.allFinite(), ErrorKind::kNonFiniteLoss, std::string(what) + " contains non-finite entries");
}

}  // namespace detail

inline RedundancyScore redundancy_score(const Matrix& z) {
  FRET_CHECK(z.rows() >= 1 && z.cols() >= 1, ErrorKind::kShapeMismatch, "redundancy_score: empty embedding batch");
  const Matrix zn = column_normalize(z);
  const Matrix gram = zn.transpose() * zn;
  double total = 0.0;
  for (Index i = 0; i < gram.rows(); ++i) {
    for (Index j = 0; j < gram.cols(); ++j) {
      if (i != j) total += std::abs(gram(i, j));
    }
  }
  return {total, z.cols(), z.rows()};
}

// Differentiable redundancy score of an embedding batch.
inline Tensor sfret_loss(const Tensor& z) {
  FRET_CHECK(z.rows() >= 1 && z.cols() >= 1, ErrorKind::kShapeMismatch, "sfret_loss: empty embedding batch");
  detail::require_finite(z.value(), "sfret_loss input");
  Tensor zn = column_normalize(z);
  Tensor gram = matmul(transpose(zn), zn);
  return sum(abs(mul(gram, Tensor::constant(detail::off_diagonal_mask(z.cols())))));
}

// Redundancy relative to the first recorded step.
class NrsTrace {
 public:
  const std::vector<long>& steps() const { return steps_; }
  const std::vector<double>& raw() const { return raw_; }
  const std::vector<double>& normalized() const { return normalized_; }
  std::size_t size() const { return steps_.size(); }
  bool empty() const { return steps_.empty(); }

  // True when the first recorded score was zero; normalized values are then 0.
  bool empty_baseline() const { return !raw_.empty() && raw_.front() == 0.0; }

  void record(long step, double raw_score) {
    FRET_CHECK(steps_.empty() || step > steps_.back(), ErrorKind::kInvalidArgument,
               "NrsTrace steps must be strictly increasing");
    steps_.push_back(step);
    raw_.push_back(raw_score);
    const double base = raw_.front();
    normalized_.push_back(base > 0.0 ? raw_score / base : 0.0);
  }

  void write_csv(std::ostream& out) const {
    out << "step,raw,normalized\n";
    out << std::setprecision(17);
    for (std::size_t i = 0; i < steps_.size(); ++i) {
      out << steps_[i] << ',' << raw_[i] << ',' << normalized_[i] << '\n';
    }
  }

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    FRET_CHECK(out.good(), ErrorKind::kIoError, "cannot write " + path);
    write_csv(out);
  }

 private:
  std::vector<long> steps_;
  std::vector<double> raw_;
  std::vector<double> normalized_;
};

inline NrsTrace nrs_update(NrsTrace trace, long step, const Matrix& z) {
  trace.record(step, redundancy_score(z).value);
  return trace;
}

}  // namespace fret
