// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
//
// Encoder/head decomposition of a sequential classifier and the parameter
// selection policies used during adaptation.
#pragma once

#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fret/nn.hpp"

namespace fret {

struct ModelOutput {
  Tensor embeddings;  // n x d
  Tensor logits;      // n x C
};

// A classifier viewed as logits = head(encoder(x)), where the head is the
// final affine layer of the network.
class SplitModel {
 public:
  SplitModel(nn::Sequential net, std::size_t cut) : net_(std::move(net)), cut_(cut) {
    head_ = dynamic_cast<nn::Linear*>(&net_.layer(cut_));
  }

  SplitModel(const SplitModel& other) : SplitModel(other.net_, other.cut_) {}
  SplitModel& operator=(const SplitModel& other) {
    if (this != &other) {
      net_ = other.net_;
      cut_ = other.cut_;
      head_ = dynamic_cast<nn::Linear*>(&net_.layer(cut_));
    }
    return *this;
  }
  SplitModel(SplitModel&& other) noexcept : SplitModel(static_cast<const SplitModel&>(other)) {}
  SplitModel& operator=(SplitModel&& other) noexcept { return *this = static_cast<const SplitModel&>(other); }

  nn::Sequential& network() { return net_; }
  const nn::Sequential& network() const { return net_; }
  std::size_t cut_index() const { return cut_; }
  const std::string& cut_name() const { return head_->name(); }

  nn::Linear& head() { return *head_; }
  const nn::Linear& head() const { return *head_; }

  Index embed_dim() const { return head_->in_features(); }
  Index num_classes() const { return head_->out_features(); }

  Tensor encode(const nn::Activation& x, const nn::ForwardOptions& opts = {}) {
    nn::Activation z = net_.forward_range(x, 0, cut_, opts);
    FRET_CHECK(z.shape.h == 1 && z.shape.w == 1 && z.data.cols() == embed_dim(), ErrorKind::kShapeMismatch,
               "encoder output width " + std::to_string(z.data.cols()) + " != embed_dim " +
                   std::to_string(embed_dim()));
    return z.data;
  }

  Tensor encode(const ImageBatch& batch, const nn::ForwardOptions& opts = {}) {
    return encode(nn::to_activation(batch), opts);
  }

  Tensor apply_head(const Tensor& z, bool with_bias = true) const { return head_->apply(z, with_bias); }

  ModelOutput forward(const ImageBatch& batch, const nn::ForwardOptions& opts = {}) {
    Tensor z = encode(batch, opts);
    Tensor p = apply_head(z);
    return {std::move(z), std::move(p)};
  }

  // The wrapped network's own forward path, for comparison with forward().
  Tensor full_forward(const ImageBatch& batch, const nn::ForwardOptions& opts = {}) {
    return net_.forward(batch, opts);
  }

  std::vector<nn::ParamRef> encoder_parameters() {
    std::vector<nn::ParamRef> out;
    for (std::size_t i = 0; i < cut_; ++i) {
      for (auto& p : net_.layer(i).params()) out.push_back(std::move(p));
    }
    return out;
  }

  std::vector<nn::ParamRef> head_parameters() { return head_->params(); }

  std::vector<nn::ParamRef> parameters() { return net_.parameters(); }

  void set_norm_mode(nn::NormMode mode) { net_.set_norm_mode(mode); }

 private:
  nn::Sequential net_;
  std::size_t cut_;
  nn::Linear* head_ = nullptr;
};

// Splits `net` at the layer named `cut`, which must be the final layer and
// affine.
inline SplitModel split(nn::Sequential net, std::string_view cut) {
  const auto idx = net.index_of(cut);
  FRET_CHECK(idx >= 0, ErrorKind::kUnsupportedArchitecture, "no layer named '" + std::string(cut) + "'");
  const auto at = static_cast<std::size_t>(idx);
  FRET_CHECK(at + 1 == net.size(), ErrorKind::kUnsupportedArchitecture,
             "cut layer '" + std::string(cut) + "' is not the final layer");
  FRET_CHECK(dynamic_cast<nn::Linear*>(&net.layer(at)) != nullptr, ErrorKind::kUnsupportedArchitecture,
             "cut layer '" + std::string(cut) + "' is not an affine layer");
  FRET_CHECK(at > 0, ErrorKind::kUnsupportedArchitecture, "network has no encoder before the head");
  return SplitModel(std::move(net), at);
}

enum class ParamMode {
  kNormAffineOnly,  // scale and shift of normalization layers
  kHeadOnly,        // classification head weight and bias
  kEncoderAndHead,  // every non-normalization parameter
  kFull,            // everything
};

inline std::string_view to_string(ParamMode mode) {
  switch (mode) {
    case ParamMode::kNormAffineOnly: return "norm_affine_only";
    case ParamMode::kHeadOnly: return "head_only";
    case ParamMode::kEncoderAndHead: return "encoder_and_head";
    case ParamMode::kFull: return "full";
  }
  return "unknown";
}

inline ParamMode parse_param_mode(std::string_view s) {
  for (auto m : {ParamMode::kNormAffineOnly, ParamMode::kHeadOnly, ParamMode::kEncoderAndHead, ParamMode::kFull}) {
    if (to_string(m) == s) return m;
  }
  throw Error(ErrorKind::kConfigError, "unknown parameter policy '" + std::string(s) + "'");
}

struct ParamPolicy {
  ParamMode mode = ParamMode::kNormAffineOnly;

  std::vector<nn::ParamRef> collect(SplitModel& model) const {
    std::vector<nn::ParamRef> out;
    switch (mode) {
      case ParamMode::kNormAffineOnly:
        for (auto& p : model.parameters()) {
          if (p.norm_affine) out.push_back(std::move(p));
        }
        break;
      case ParamMode::kHeadOnly:
        out = model.head_parameters();
        break;
      case ParamMode::kEncoderAndHead:
        for (auto& p : model.parameters()) {
          if (!p.norm_affine) out.push_back(std::move(p));
        }
        break;
      case ParamMode::kFull:
        out = model.parameters();
        break;
    }
    return out;
  }
};

// Marks the parameters selected by `policy` trainable and freezes the rest.
inline std::vector<nn::ParamRef> trainable_params(SplitModel& model, const ParamPolicy& policy) {
  auto selected = policy.collect(model);
  FRET_CHECK(!selected.empty(), ErrorKind::kEmptySelection,
             "policy " + std::string(to_string(policy.mode)) + " matched no parameters");
  std::set<const detail::Node*> chosen;
  for (const auto& p : selected) chosen.insert(p.tensor.node());
  for (auto& p : model.parameters()) p.tensor.set_requires_grad(chosen.count(p.tensor.node()) != 0);
  return selected;
}

}  // namespace fret
