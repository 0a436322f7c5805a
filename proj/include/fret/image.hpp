// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "fret/error.hpp"

namespace fret {

// A batch of images in NHWC order with float pixels in [0, 1].
struct ImageBatch {
  std::size_t n = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> pixels;

  std::size_t image_size() const { return height * width * channels; }

  float* image(std::size_t i) { return pixels.data() + i * image_size(); }
  const float* image(std::size_t i) const { return pixels.data() + i * image_size(); }

  void validate() const {
    FRET_CHECK(pixels.size() == n * image_size(), ErrorKind::kShapeMismatch, "ImageBatch pixel count");
  }

  static ImageBatch zeros(std::size_t n, std::size_t h, std::size_t w, std::size_t c) {
    return ImageBatch{n, h, w, c, std::vector<float>(n * h * w * c, 0.0f)};
  }
};

// Copies rows `indices` of `src` into a new batch.
inline ImageBatch gather(const ImageBatch& src, const std::vector<std::size_t>& indices) {
  ImageBatch out{indices.size(), src.height, src.width, src.channels, {}};
  out.pixels.resize(out.n * out.image_size());
  const std::size_t sz = src.image_size();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    FRET_CHECK(indices[k] < src.n, ErrorKind::kShapeMismatch, "gather: index out of range");
    std::copy_n(src.image(indices[k]), sz, out.image(k));
  }
  return out;
}

}  // namespace fret
