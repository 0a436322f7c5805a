// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every tensor is a 2-D matrix; image activations are stored in
// NHWC order flattened to (n*h*w) x channels so that convolutions reduce to
// an im2col gather followed by a matrix product.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fret/error.hpp"

namespace fret {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

inline thread_local int no_grad_depth = 0;

template <typename Expr>
void push_grad(Node* node, const Expr& g) {
  if (!node->requires_grad) return;
  if (node->grad.size() == 0) {
    node->grad = g;
  } else {
    node->grad += g;
  }
}

}  // namespace detail

// Disables graph construction on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Matrix value, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) {
    node_->requires_grad = on;
    if (!on) zero_grad();
  }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double item() const {
    FRET_CHECK(rows() == 1 && cols() == 1, ErrorKind::kShapeMismatch, "item() on non-scalar tensor");
    return node_->value(0, 0);
  }

  // Same storage, no history.
  Tensor detach() const { return Tensor(node_->value, false); }

  bool is_same(const Tensor& other) const { return node_ == other.node_; }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared_node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline Tensor make_result(Matrix value, std::vector<Tensor> inputs, std::function<void(Node&)> backward) {
  Tensor out(std::move(value), false);
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  Node* node = out.node();
  node->requires_grad = true;
  node->parents.reserve(inputs.size());
  for (const auto& t : inputs) node->parents.push_back(t.shared_node());
  node->backward = std::move(backward);
  return out;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  FRET_CHECK(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::kShapeMismatch,
             std::string(op) + ": shape " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                 " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

}  // namespace detail

// Accumulates d(root)/d(leaf) into every reachable tensor that requires grad.
inline void backward(const Tensor& root) {
  FRET_CHECK(root.rows() == 1 && root.cols() == 1, ErrorKind::kShapeMismatch, "backward() needs a scalar root");
  if (!root.requires_grad()) return;

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  detail::push_grad(root.node(), Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
}

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra primitives.

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  FRET_CHECK(a.cols() == b.rows(), ErrorKind::kShapeMismatch, "matmul: inner dimensions differ");
  Matrix v = a.value() * b.value();
  return detail::make_result(std::move(v), {a, b}, [](detail::Node& self) {
    detail::Node* a = self.parents[0].get();
    detail::Node* b = self.parents[1].get();
    if (a->requires_grad) detail::push_grad(a, self.grad * b->value.transpose());
    if (b->requires_grad) detail::push_grad(b, a->value.transpose() * self.grad);
  });
}

inline Tensor transpose(const Tensor& a) {
  Matrix v = a.value().transpose();
  return detail::make_result(std::move(v), {a}, [](detail::Node& self) {
    detail::push_grad(self.parents[0].get(), self.grad.transpose());
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Matrix v = a.value() + b.value();
  return detail::make_result(std::move(v), {a, b}, [](detail::Node& self) {
    detail::push_grad(self.parents[0].get(), self.grad);
    detail::push_grad(self.parents[1].get(), self.grad);
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Matrix v = a.value() - b.value();
  return detail::make_result(std::move(v), {a, b}, [](detail::Node& self) {
    detail::push_grad(self.parents[0].get(), self.grad);
    detail::push_grad(self.parents[1].get(), -self.grad);
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  Matrix v = a.value().cwiseProduct(b.value());
  return detail::make_result(std::move(v), {a, b}, [](detail::Node& self) {
    detail::Node* a = self.parents[0].get();
    detail::Node* b = self.parents[1].get();
    if (a->requires_grad) detail::push_grad(a, self.grad.cwiseProduct(b->value));
    if (b->requires_grad) detail::push_grad(b, self.grad.cwiseProduct(a->value));
  });
}

inline Tensor scale(const Tensor& a, double s) {
  Matrix v = a.value() * s;
  return detail::make_result(std::move(v), {a}, [s](detail::Node& self) {
    detail::push_grad(self.parents[0].get(), self.grad * s);
  });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  Matrix v = a.value().array() + s;
  return detail::make_result(std::move(v), {a}, [](detail::Node& self) {
    detail::push_grad(self.parents[0].get(), self.grad);
  });
}

// a (n x m) + r (1 x m), broadcast over rows.
inline Tensor add_row(const Tensor& a, const Tensor& r) {
  FRET_CHECK(r.rows() == 1 && r.cols() == a.cols(), ErrorKind::kShapeMismatch, "add_row: bad row vector");
  Matrix v = a.value().rowwise() + r.value().row(0);
  return detail::make_result(std::move(v), {a, r}, [](detail::Node& self) {
    detail::push_grad(self.parents[0].get(), self.grad);
    detail::push_grad(self.parents[1].get(), self.grad.colwise().sum());
  });
}

inline Tensor sub_row(const Tensor& a, const Tensor& r) {
  FRET_CHECK(r.rows() == 1 && r.cols() == a.cols(), ErrorKind::kShapeMismatch, "sub_row: bad row vector");
  Matrix v = a.value().rowwise() - r.value().row(0);
  return detail::make_result(std::move(v), {a, r}, [](detail::Node& self) {
    detail::push_grad(self.parents[0].get(), self.grad);
    detail::push_grad(self.parents[1].get(), -self.grad.colwise().sum());
  });
}

// a (n x m) scaled columnwise by r (1 x m).
inline Tensor mul_row(const Tensor& a, const Tensor& r) {
  FRET_CHECK(r.rows() == 1 && r.cols() == a.cols(), ErrorKind::kShapeMismatch, "mul_row: bad row vector");
  Matrix v = a.value().array().rowwise() * r.value().row(0).array();
  return detail::make_result(std::move(v), {a, r}, [](detail::Node& self) {
    detail::Node* a = self.parents[0].get();
    detail::Node* r = self.parents[1].get();
    if (a->requires_grad) {
      Matrix ga = self.grad.array().rowwise() * r->value.row(0).array();
      detail::push_grad(a, ga);
    }
    if (r->requires_grad) detail::push_grad(r, self.grad.cwiseProduct(a->value).colwise().sum());
  });
}

// a (n x m) scaled rowwise by c (n x 1).
inline Tensor mul_col(const Tensor& a, const Tensor& c) {
  FRET_CHECK(c.cols() == 1 && c.rows() == a.rows(), ErrorKind::kShapeMismatch, "mul_col: bad column vector");
  Matrix v = a.value().array().colwise() * c.value().col(0).array();
  return detail::make_result(std::move(v), {a, c}, [](detail::Node& self) {
    detail::Node* a = self.parents[0].get();
    detail::Node* c = self.parents[1].get();
    if (a->requires_grad) {
      Matrix ga = self.grad.array().colwise() * c->value.col(0).array();
      detail::push_grad(a, ga);
    }
    if (c->requires_grad) detail::push_grad(c, self.grad.cwiseProduct(a->value).rowwise().sum());
  });
}

// Subgradient of |x| at 0 is 0.
inline Tensor abs(const Tensor& a) {
  Matrix v = a.value().cwiseAbs();
  return detail::make_result(std::move(v), {a}, [](detail::Node& self) {
    const Matrix& x = self.parents[0]->value;
    Matrix sign = x.unaryExpr([](double e) { return e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0); });
    detail::push_grad(self.parents[0].get(), self.grad.cwiseProduct(sign));
  });
}

inline Tensor log(const Tensor& a) {
  Matrix v = a.value().array().log();
  return detail::make_result(std::move(v), {a}, [](detail::Node& self) {
    detail::push_grad(self.parents[0].get(), self.grad.cwiseQuotient(self.parents[0]->value));
  });
}

inline Tensor exp(const Tensor& a) {
  Matrix v = a.value().array().exp();
  return detail::make_result(std::move(v), {a}, [](detail::Node& self) {
    detail::push_grad(self.parents[0].get(), self.grad.cwiseProduct(self.value));
  });
}

inline Tensor pow(const Tensor& a, double p) {
  Matrix v = a.value().array().pow(p);
  return detail::make_result(std::move(v), {a}, [p](detail::Node& self) {
    Matrix d = p * self.parents[0]->value.array().pow(p - 1.0);
    detail::push_grad(self.parents[0].get(), self.grad.cwiseProduct(d));
  });
}

inline Tensor relu(const Tensor& a) {
  Matrix v = a.value().cwiseMax(0.0);
  return detail::make_result(std::move(v), {a}, [](detail::Node& self) {
    Matrix mask = (self.parents[0]->value.array() > 0.0).cast<double>();
    detail::push_grad(self.parents[0].get(), self.grad.cwiseProduct(mask));
  });
}

inline Tensor sum(const Tensor& a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return detail::make_result(std::move(v), {a}, [](detail::Node& self) {
    const Matrix& x = self.parents[0]->value;
    detail::push_grad(self.parents[0].get(), Matrix::Constant(x.rows(), x.cols(), self.grad(0, 0)));
  });
}

// (n x m) -> (1 x m)
inline Tensor col_sum(const Tensor& a) {
  Matrix v = a.value().colwise().sum();
  return detail::make_result(std::move(v), {a}, [](detail::Node& self) {
    const Index n = self.parents[0]->value.rows();
    Matrix g = self.grad.replicate(n, 1);
    detail::push_grad(self.parents[0].get(), g);
  });
}

// (n x m) -> (n x 1)
inline Tensor row_sum(const Tensor& a) {
  Matrix v = a.value().rowwise().sum();
  return detail::make_result(std::move(v), {a}, [](detail::Node& self) {
    const Index m = self.parents[0]->value.cols();
    Matrix g = self.grad.replicate(1, m);
    detail::push_grad(self.parents[0].get(), g);
  });
}

inline Tensor hconcat(const Tensor& a, const Tensor& b) {
  FRET_CHECK(a.rows() == b.rows(), ErrorKind::kShapeMismatch, "hconcat: row counts differ");
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const Index split = a.cols();
  return detail::make_result(std::move(v), {a, b}, [split](detail::Node& self) {
    detail::push_grad(self.parents[0].get(), self.grad.leftCols(split));
    detail::push_grad(self.parents[1].get(), self.grad.rightCols(self.grad.cols() - split));
  });
}

inline Tensor select_rows(const Tensor& a, const std::vector<Index>& rows) {
  Matrix v(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    FRET_CHECK(rows[k] >= 0 && rows[k] < a.rows(), ErrorKind::kShapeMismatch, "select_rows: index out of range");
    v.row(static_cast<Index>(k)) = a.value().row(rows[k]);
  }
  return detail::make_result(std::move(v), {a}, [rows](detail::Node& self) {
    detail::Node* a = self.parents[0].get();
    Matrix g = Matrix::Zero(a->value.rows(), a->value.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) g.row(rows[k]) += self.grad.row(static_cast<Index>(k));
    detail::push_grad(a, g);
  });
}

// out(k, 0) = a(k, cols[k])
inline Tensor pick(const Tensor& a, const std::vector<Index>& cols) {
  FRET_CHECK(static_cast<Index>(cols.size()) == a.rows(), ErrorKind::kShapeMismatch, "pick: one column per row");
  Matrix v(a.rows(), 1);
  for (Index k = 0; k < a.rows(); ++k) {
    FRET_CHECK(cols[k] >= 0 && cols[k] < a.cols(), ErrorKind::kShapeMismatch, "pick: column out of range");
    v(k, 0) = a.value()(k, cols[k]);
  }
  return detail::make_result(std::move(v), {a}, [cols](detail::Node& self) {
    detail::Node* a = self.parents[0].get();
    Matrix g = Matrix::Zero(a->value.rows(), a->value.cols());
    for (Index k = 0; k < g.rows(); ++k) g(k, cols[k]) = self.grad(k, 0);
    detail::push_grad(a, g);
  });
}

// Row-major reinterpretation; element order is preserved.
inline Tensor reshape(const Tensor& a, Index rows, Index cols) {
  FRET_CHECK(rows * cols == a.value().size(), ErrorKind::kShapeMismatch, "reshape: element count differs");
  Matrix v = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return detail::make_result(std::move(v), {a}, [](detail::Node& self) {
    const Matrix& x = self.parents[0]->value;
    Matrix g = Eigen::Map<const Matrix>(self.grad.data(), x.rows(), x.cols());
    detail::push_grad(self.parents[0].get(), g);
  });
}

// ---------------------------------------------------------------------------
// Fused, numerically careful primitives.

inline Matrix log_softmax_rows(const Matrix& x) {
  Eigen::VectorXd mx = x.rowwise().maxCoeff();
  Matrix shifted = x.colwise() - mx;
  Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log();
  return shifted.colwise() - lse;
}

inline Tensor log_softmax(const Tensor& a) {
  Matrix v = log_softmax_rows(a.value());
  return detail::make_result(std::move(v), {a}, [](detail::Node& self) {
    Matrix p = self.value.array().exp();
    Eigen::VectorXd gs = self.grad.rowwise().sum();
    Matrix g = self.grad - Matrix(p.array().colwise() * gs.array());
    detail::push_grad(self.parents[0].get(), g);
  });
}

// Divides each column by its Euclidean norm. All-zero columns stay zero and
// receive zero gradient.
inline Tensor column_normalize(const Tensor& a) {
  const Matrix& x = a.value();
  Eigen::RowVectorXd norms = x.colwise().norm();
  Matrix v = x;
  for (Index j = 0; j < x.cols(); ++j) {
    if (norms(j) > 0.0) {
      v.col(j) /= norms(j);
    } else {
      v.col(j).setZero();
    }
  }
  return detail::make_result(std::move(v), {a}, [norms](detail::Node& self) {
    Matrix g = Matrix::Zero(self.value.rows(), self.value.cols());
    for (Index j = 0; j < self.value.cols(); ++j) {
      if (norms(j) <= 0.0) continue;
      const double proj = self.value.col(j).dot(self.grad.col(j));
      g.col(j) = (self.grad.col(j) - self.value.col(j) * proj) / norms(j);
    }
    detail::push_grad(self.parents[0].get(), g);
  });
}

// Divides each row by its Euclidean norm. Rows with norm below `floor` are
// zeroed and receive zero gradient.
inline Tensor row_normalize(const Tensor& a, double floor = 1e-12) {
  const Matrix& x = a.value();
  Eigen::VectorXd norms = x.rowwise().norm();
  Matrix v = x;
  for (Index i = 0; i < x.rows(); ++i) {
    if (norms(i) >= floor) {
      v.row(i) /= norms(i);
    } else {
      v.row(i).setZero();
    }
  }
  return detail::make_result(std::move(v), {a}, [norms, floor](detail::Node& self) {
    Matrix g = Matrix::Zero(self.value.rows(), self.value.cols());
    for (Index i = 0; i < self.value.rows(); ++i) {
      if (norms(i) < floor) continue;
      const double proj = self.value.row(i).dot(self.grad.row(i));
      g.row(i) = (self.grad.row(i) - self.value.row(i) * proj) / norms(i);
    }
    detail::push_grad(self.parents[0].get(), g);
  });
}

// ---------------------------------------------------------------------------
// Spatial primitives on NHWC activations stored as (n*h*w) x c.

struct SpatialShape {
  Index n = 0;
  Index h = 0;
  Index w = 0;
  Index c = 0;
};

// Gathers k x k patches; output columns are ordered (ky, kx, channel).
inline Tensor im2col(const Tensor& a, SpatialShape in, Index kernel, Index stride, Index pad) {
  FRET_CHECK(a.rows() == in.n * in.h * in.w && a.cols() == in.c, ErrorKind::kShapeMismatch, "im2col: input shape");
  const Index oh = (in.h + 2 * pad - kernel) / stride + 1;
  const Index ow = (in.w + 2 * pad - kernel) / stride + 1;
  const Index patch = kernel * kernel * in.c;
  Matrix v = Matrix::Zero(in.n * oh * ow, patch);
  const Matrix& x = a.value();
  for (Index b = 0; b < in.n; ++b) {
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        const Index row = (b * oh + oy) * ow + ox;
        for (Index ky = 0; ky < kernel; ++ky) {
          const Index iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= in.h) continue;
          for (Index kx = 0; kx < kernel; ++kx) {
            const Index ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= in.w) continue;
            v.row(row).segment((ky * kernel + kx) * in.c, in.c) = x.row((b * in.h + iy) * in.w + ix);
          }
        }
      }
    }
  }
  return detail::make_result(std::move(v), {a}, [in, kernel, stride, pad, oh, ow](detail::Node& self) {
    Matrix g = Matrix::Zero(in.n * in.h * in.w, in.c);
    for (Index b = 0; b < in.n; ++b) {
      for (Index oy = 0; oy < oh; ++oy) {
        for (Index ox = 0; ox < ow; ++ox) {
          const Index row = (b * oh + oy) * ow + ox;
          for (Index ky = 0; ky < kernel; ++ky) {
            const Index iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= in.h) continue;
            for (Index kx = 0; kx < kernel; ++kx) {
              const Index ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= in.w) continue;
              g.row((b * in.h + iy) * in.w + ix) += self.grad.row(row).segment((ky * kernel + kx) * in.c, in.c);
            }
          }
        }
      }
    }
    detail::push_grad(self.parents[0].get(), g);
  });
}

// Non-overlapping max pooling with window == stride. Trailing rows/columns
// that do not fill a window are dropped.
inline Tensor max_pool(const Tensor& a, SpatialShape in, Index window) {
  FRET_CHECK(a.rows() == in.n * in.h * in.w && a.cols() == in.c, ErrorKind::kShapeMismatch, "max_pool: input shape");
  const Index oh = in.h / window;
  const Index ow = in.w / window;
  Matrix v(in.n * oh * ow, in.c);
  std::vector<Index> argmax(static_cast<std::size_t>(v.size()));
  const Matrix& x = a.value();
  for (Index b = 0; b < in.n; ++b) {
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        const Index row = (b * oh + oy) * ow + ox;
        for (Index ch = 0; ch < in.c; ++ch) {
          double best = -std::numeric_limits<double>::infinity();
          Index best_row = 0;
          for (Index ky = 0; ky < window; ++ky) {
            for (Index kx = 0; kx < window; ++kx) {
              const Index src = (b * in.h + oy * window + ky) * in.w + ox * window + kx;
              if (x(src, ch) > best) {
                best = x(src, ch);
                best_row = src;
              }
            }
          }
          v(row, ch) = best;
          argmax[static_cast<std::size_t>(row * in.c + ch)] = best_row;
        }
      }
    }
  }
  return detail::make_result(std::move(v), {a}, [argmax = std::move(argmax), in](detail::Node& self) {
    Matrix g = Matrix::Zero(in.n * in.h * in.w, in.c);
    for (Index row = 0; row < self.grad.rows(); ++row) {
      for (Index ch = 0; ch < in.c; ++ch) {
        g(argmax[static_cast<std::size_t>(row * in.c + ch)], ch) += self.grad(row, ch);
      }
    }
    detail::push_grad(self.parents[0].get(), g);
  });
}

// (n*h*w) x c -> n x c
inline Tensor global_avg_pool(const Tensor& a, SpatialShape in) {
  FRET_CHECK(a.rows() == in.n * in.h * in.w && a.cols() == in.c, ErrorKind::kShapeMismatch,
             "global_avg_pool: input shape");
  const Index hw = in.h * in.w;
  Matrix v(in.n, in.c);
  for (Index b = 0; b < in.n; ++b) v.row(b) = a.value().middleRows(b * hw, hw).colwise().mean();
  return detail::make_result(std::move(v), {a}, [in, hw](detail::Node& self) {
    Matrix g(in.n * hw, in.c);
    const double inv = 1.0 / static_cast<double>(hw);
    for (Index b = 0; b < in.n; ++b) g.middleRows(b * hw, hw) = (self.grad.row(b) * inv).replicate(hw, 1);
    detail::push_grad(self.parents[0].get(), g);
  });
}

}  // namespace fret
