// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
//
// Supervised training of source checkpoints.
#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "fret/data.hpp"
#include "fret/nn.hpp"
#include "fret/objectives.hpp"
#include "fret/optim.hpp"

namespace fret {

inline Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels) {
  FRET_CHECK(static_cast<Index>(labels.size()) == logits.rows(), ErrorKind::kShapeMismatch, "cross_entropy: labels");
  std::vector<Index> cols(labels.begin(), labels.end());
  return scale(sum(pick(log_softmax(logits), cols)), -1.0 / static_cast<double>(logits.rows()));
}

struct TrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  OptimizerConfig optimizer{OptimizerKind::kAdam, 3e-3};
  std::uint64_t seed = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
};

// Mini-batch training with batch statistics; running statistics are updated
// on every batch. The network is left in running-statistics mode.
inline std::vector<EpochStats> train_classifier(nn::Sequential& net, const Dataset& data, const TrainOptions& opts,
                                                const std::function<void(const EpochStats&)>& on_epoch = {}) {
  data.validate();
  FRET_CHECK(opts.batch_size >= 1, ErrorKind::kInvalidArgument, "batch_size must be positive");
  auto params = net.parameters();
  for (auto& p : params) p.tensor.set_requires_grad(true);
  Optimizer optim(params, opts.optimizer);
  std::mt19937_64 rng(mix_seed(opts.seed, 0x7261696e));
  std::vector<std::size_t> order(data.labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<EpochStats> history;
  net.set_norm_mode(nn::NormMode::kBatchStats);
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      if (end - start < 2) continue;  // batch statistics need two samples
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      Dataset batch = data.subset(idx);
      Tensor logits = net.forward(batch.images, {true});
      Tensor loss = cross_entropy(logits, batch.labels);
      optim.zero_grad();
      backward(loss);
      optim.step();
      loss_sum += loss.item();
      ++batches;
      const auto pred = argmax_rows(logits.value());
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i] ? 1 : 0;
    }
    EpochStats stats{epoch, batches ? loss_sum / static_cast<double>(batches) : 0.0,
                     static_cast<double>(correct) / static_cast<double>(std::max<std::size_t>(1, order.size()))};
    history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  net.set_norm_mode(nn::NormMode::kRunningStats);
  for (auto& p : params) p.tensor.set_requires_grad(false);
  return history;
}

// Accuracy with stored statistics, evaluated in chunks.
inline double evaluate_accuracy(nn::Sequential& net, const Dataset& data, std::size_t chunk = 256) {
  data.validate();
  NoGradGuard guard;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.labels.size(); start += chunk) {
    const std::size_t end = std::min(data.labels.size(), start + chunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Dataset batch = data.subset(idx);
    const auto pred = argmax_rows(net.forward(batch.images).value());
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(std::max<std::size_t>(1, data.labels.size()));
}

}  // namespace fret
