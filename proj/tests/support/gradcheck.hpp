// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference oracle used to validate analytic gradients.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "fret/autograd.hpp"

namespace fret::testing {

// Numerical gradient of a scalar function of one matrix.
inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h = 1e-4) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = f(probe);
    probe.data()[i] = orig - h;
    const double down = f(probe);
    probe.data()[i] = orig;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Analytic gradient obtained by building the graph from a fresh leaf.
inline Matrix analytic_gradient(const std::function<Tensor(const Tensor&)>& f, const Matrix& x) {
  Tensor leaf = Tensor::parameter(x);
  Tensor out = f(leaf);
  backward(out);
  return leaf.has_grad() ? leaf.grad() : Matrix::Zero(x.rows(), x.cols());
}

// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)
inline double max_relative_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-3) {
  double worst = 0.0;
  for (Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i];
    const double n = numeric.data()[i];
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

inline double gradient_error(const std::function<Tensor(const Tensor&)>& f, const Matrix& x, double h = 1e-4) {
  const Matrix analytic = analytic_gradient(f, x);
  const Matrix numeric = numeric_gradient(
      [&](const Matrix& m) {
        NoGradGuard guard;
        return f(Tensor::constant(m)).item();
      },
      x, h);
  return max_relative_error(analytic, numeric);
}

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace fret::testing
