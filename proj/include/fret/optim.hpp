// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "fret/nn.hpp"

namespace fret {

enum class OptimizerKind { kSgd, kAdam };

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw Error(ErrorKind::kConfigError, "unknown optimizer '" + std::string(s) + "'");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double lr = 1e-4;
  double momentum = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Updates the given parameters in place from their accumulated gradients.
// Parameters without a gradient are left untouched.
class Optimizer {
 public:
  Optimizer(std::vector<nn::ParamRef> params, OptimizerConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    FRET_CHECK(cfg_.lr >= 0.0, ErrorKind::kInvalidArgument, "learning rate must be nonnegative");
    reset_state();
  }

  const OptimizerConfig& config() const { return cfg_; }
  const std::vector<nn::ParamRef>& params() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  void reset_state() {
    first_.assign(params_.size(), Matrix());
    second_.assign(params_.size(), Matrix());
    steps_ = 0;
  }

  void step() {
    ++steps_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& t = params_[i].tensor;
      if (!t.has_grad()) continue;
      Matrix g = t.grad();
      if (cfg_.weight_decay != 0.0) g += cfg_.weight_decay * t.value();
      if (cfg_.kind == OptimizerKind::kSgd) {
        if (cfg_.momentum != 0.0) {
          if (first_[i].size() == 0) {
            first_[i] = g;
          } else {
            first_[i] = cfg_.momentum * first_[i] + g;
          }
          g = first_[i];
        }
        t.mutable_value() -= cfg_.lr * g;
      } else {
        if (first_[i].size() == 0) {
          first_[i] = Matrix::Zero(g.rows(), g.cols());
          second_[i] = Matrix::Zero(g.rows(), g.cols());
        }
        first_[i] = cfg_.beta1 * first_[i] + (1.0 - cfg_.beta1) * g;
        second_[i] = cfg_.beta2 * second_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
        Matrix denom = (second_[i] / c2).cwiseSqrt().array() + cfg_.eps;
        t.mutable_value() -= cfg_.lr * (first_[i] / c1).cwiseQuotient(denom);
      }
    }
  }

 private:
  std::vector<nn::ParamRef> params_;
  OptimizerConfig cfg_;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
  long steps_ = 0;
};

}  // namespace fret
