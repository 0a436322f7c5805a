// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reference networks. Every builder ends in a linear layer named "fc" so the
// result can be split with cut = "fc".
#pragma once

#include <random>

#include "fret/nn.hpp"

namespace fret::arch {

// conv-bn-relu-pool x2, conv-bn-relu, global average pool, linear head.
inline nn::Sequential small_cnn(Index height, Index width, Index channels, Index num_classes, std::mt19937_64& rng,
                                Index base_width = 8) {
  nn::Sequential net({height, width, channels});
  net.add<nn::Conv2d>("conv1", channels, base_width, 3, 1, 1, rng);
  net.add<nn::BatchNorm>("bn1", base_width);
  net.add<nn::ReLU>("relu1");
  net.add<nn::MaxPool>("pool1", 2);
  net.add<nn::Conv2d>("conv2", base_width, 2 * base_width, 3, 1, 1, rng);
  net.add<nn::BatchNorm>("bn2", 2 * base_width);
  net.add<nn::ReLU>("relu2");
  net.add<nn::MaxPool>("pool2", 2);
  net.add<nn::Conv2d>("conv3", 2 * base_width, 4 * base_width, 3, 1, 1, rng);
  net.add<nn::BatchNorm>("bn3", 4 * base_width);
  net.add<nn::ReLU>("relu3");
  net.add<nn::GlobalAvgPool>("gap");
  net.add<nn::Linear>("fc", 4 * base_width, num_classes, rng);
  return net;
}

// Operates on 1x1xin_features inputs.
inline nn::Sequential mlp(Index in_features, Index hidden, Index num_classes, std::mt19937_64& rng,
                          bool batch_norm = false) {
  nn::Sequential net({1, 1, in_features});
  net.add<nn::Linear>("hidden", in_features, hidden, rng);
  if (batch_norm) net.add<nn::BatchNorm>("bn", hidden);
  net.add<nn::ReLU>("relu");
  net.add<nn::Linear>("fc", hidden, num_classes, rng);
  return net;
}

}  // namespace fret::arch
