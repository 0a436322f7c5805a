// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small sequential network toolkit: convolution, batch normalization,
// pooling and affine layers built on the autograd primitives, plus a JSON
// checkpoint format that stores both architecture and weights.
#pragma once

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fret/autograd.hpp"
#include "fret/image.hpp"

namespace fret::nn {

using json = nlohmann::json;

enum class NormMode {
  kRunningStats,  // stored training statistics
  kBatchStats,    // statistics of the current batch
};

struct Activation {
  Tensor data;  // (n*h*w) x c
  SpatialShape shape;
};

inline Activation to_activation(const ImageBatch& batch) {
  batch.validate();
  Matrix m(static_cast<Index>(batch.n * batch.height * batch.width), static_cast<Index>(batch.channels));
  for (std::size_t i = 0; i < batch.pixels.size(); ++i) m.data()[i] = static_cast<double>(batch.pixels[i]);
  return {Tensor::constant(std::move(m)),
          {static_cast<Index>(batch.n), static_cast<Index>(batch.height), static_cast<Index>(batch.width),
           static_cast<Index>(batch.channels)}};
}

struct ForwardOptions {
  // Only meaningful for layers in kBatchStats mode.
  bool update_running_stats = false;
};

struct ParamRef {
  std::string layer;
  std::string name;
  Tensor tensor;
  bool norm_affine = false;

  std::string qualified_name() const { return layer + "." + name; }
};

class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const { return name_; }
  virtual std::string_view type() const = 0;
  virtual Activation forward(const Activation& x, const ForwardOptions& opts) = 0;
  virtual std::vector<ParamRef> params() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual json to_json() const { return json{{"name", name_}, {"type", std::string(type())}}; }

 private:
  std::string name_;
};

namespace detail {

inline json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()},
              {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

inline Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  FRET_CHECK(static_cast<Index>(data.size()) == rows * cols, ErrorKind::kIoError, "checkpoint tensor size mismatch");
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

inline Tensor copy_tensor(const Tensor& t) { return Tensor(t.value(), t.requires_grad()); }

inline Matrix he_normal(Index rows, Index cols, Index fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace detail

class Conv2d final : public Layer {
 public:
  Conv2d(std::string name, Index in_channels, Index out_channels, Index kernel, Index stride, Index padding,
         std::mt19937_64& rng)
      : Layer(std::move(name)), in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride),
        pad_(padding),
        weight_(Tensor::parameter(detail::he_normal(kernel * kernel * in_channels, out_channels,
                                                    kernel * kernel * in_channels, rng))),
        bias_(Tensor::parameter(Matrix::Zero(1, out_channels))) {}

  Conv2d(std::string name, Index in_channels, Index out_channels, Index kernel, Index stride, Index padding,
         Tensor weight, Tensor bias)
      : Layer(std::move(name)), in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride),
        pad_(padding), weight_(std::move(weight)), bias_(std::move(bias)) {
    FRET_CHECK(weight_.rows() == kernel * kernel * in_channels && weight_.cols() == out_channels,
               ErrorKind::kShapeMismatch, "conv2d weight shape");
    FRET_CHECK(bias_.rows() == 1 && bias_.cols() == out_channels, ErrorKind::kShapeMismatch, "conv2d bias shape");
  }

  std::string_view type() const override { return "conv2d"; }

  Activation forward(const Activation& x, const ForwardOptions&) override {
    FRET_CHECK(x.shape.c == in_, ErrorKind::kShapeMismatch, name() + ": input channels");
    Tensor cols = im2col(x.data, x.shape, kernel_, stride_, pad_);
    Tensor y = add_row(matmul(cols, weight_), bias_);
    const Index oh = (x.shape.h + 2 * pad_ - kernel_) / stride_ + 1;
    const Index ow = (x.shape.w + 2 * pad_ - kernel_) / stride_ + 1;
    return {std::move(y), {x.shape.n, oh, ow, out_}};
  }

  std::vector<ParamRef> params() override {
    return {{name(), "weight", weight_, false}, {name(), "bias", bias_, false}};
  }

  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<Conv2d>(name(), in_, out_, kernel_, stride_, pad_, detail::copy_tensor(weight_),
                                    detail::copy_tensor(bias_));
  }

  json to_json() const override {
    json j = Layer::to_json();
    j["in_channels"] = in_;
    j["out_channels"] = out_;
    j["kernel"] = kernel_;
    j["stride"] = stride_;
    j["padding"] = pad_;
    j["tensors"] = {{"weight", detail::matrix_to_json(weight_.value())},
                    {"bias", detail::matrix_to_json(bias_.value())}};
    return j;
  }

 private:
  Index in_, out_, kernel_, stride_, pad_;
  Tensor weight_;
  Tensor bias_;
};

// Normalizes every column (channel) over all rows of the activation.
class BatchNorm final : public Layer {
 public:
  BatchNorm(std::string name, Index channels, double eps = 1e-5, double momentum = 0.1)
      : Layer(std::move(name)), channels_(channels), eps_(eps), momentum_(momentum),
        gamma_(Tensor::parameter(Matrix::Ones(1, channels))), beta_(Tensor::parameter(Matrix::Zero(1, channels))),
        running_mean_(Matrix::Zero(1, channels)), running_var_(Matrix::Ones(1, channels)) {}

  std::string_view type() const override { return "batchnorm"; }

  NormMode mode() const { return mode_; }
  void set_mode(NormMode mode) { mode_ = mode; }
  const Matrix& running_mean() const { return running_mean_; }
  const Matrix& running_var() const { return running_var_; }
  void set_running_stats(Matrix mean, Matrix var) {
    FRET_CHECK(mean.cols() == channels_ && var.cols() == channels_, ErrorKind::kShapeMismatch, "running stats");
    running_mean_ = std::move(mean);
    running_var_ = std::move(var);
  }
  void set_affine(Tensor gamma, Tensor beta) {
    gamma_ = std::move(gamma);
    beta_ = std::move(beta);
  }

  Activation forward(const Activation& x, const ForwardOptions& opts) override {
    FRET_CHECK(x.shape.c == channels_, ErrorKind::kShapeMismatch, name() + ": channel count");
    Tensor normalized;
    if (mode_ == NormMode::kBatchStats) {
      const double count = static_cast<double>(x.data.rows());
      Tensor mean = scale(col_sum(x.data), 1.0 / count);
      Tensor centered = sub_row(x.data, mean);
      Tensor var = scale(col_sum(mul(centered, centered)), 1.0 / count);
      normalized = mul_row(centered, pow(add_scalar(var, eps_), -0.5));
      if (opts.update_running_stats) {
        const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
        running_mean_ = (1.0 - momentum_) * running_mean_ + momentum_ * mean.value();
        running_var_ = (1.0 - momentum_) * running_var_ + momentum_ * unbias * var.value();
      }
    } else {
      Matrix inv = (running_var_.array() + eps_).rsqrt();
      normalized = mul_row(sub_row(x.data, Tensor::constant(running_mean_)), Tensor::constant(std::move(inv)));
    }
    return {add_row(mul_row(normalized, gamma_), beta_), x.shape};
  }

  std::vector<ParamRef> params() override {
    return {{name(), "gamma", gamma_, true}, {name(), "beta", beta_, true}};
  }

  std::unique_ptr<Layer> clone() const override {
    auto copy = std::make_unique<BatchNorm>(name(), channels_, eps_, momentum_);
    copy->set_affine(detail::copy_tensor(gamma_), detail::copy_tensor(beta_));
    copy->set_running_stats(running_mean_, running_var_);
    copy->set_mode(mode_);
    return copy;
  }

  json to_json() const override {
    json j = Layer::to_json();
    j["channels"] = channels_;
    j["eps"] = eps_;
    j["momentum"] = momentum_;
    j["tensors"] = {{"gamma", detail::matrix_to_json(gamma_.value())},
                    {"beta", detail::matrix_to_json(beta_.value())},
                    {"running_mean", detail::matrix_to_json(running_mean_)},
                    {"running_var", detail::matrix_to_json(running_var_)}};
    return j;
  }

 private:
  Index channels_;
  double eps_;
  double momentum_;
  NormMode mode_ = NormMode::kRunningStats;
  Tensor gamma_;
  Tensor beta_;
  Matrix running_mean_;
  Matrix running_var_;
};

class ReLU final : public Layer {
 public:
  using Layer::Layer;
  std::string_view type() const override { return "relu"; }
  Activation forward(const Activation& x, const ForwardOptions&) override { return {relu(x.data), x.shape}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(name()); }
};

class MaxPool final : public Layer {
 public:
  MaxPool(std::string name, Index window) : Layer(std::move(name)), window_(window) {}
  std::string_view type() const override { return "maxpool"; }
  Activation forward(const Activation& x, const ForwardOptions&) override {
    return {max_pool(x.data, x.shape, window_), {x.shape.n, x.shape.h / window_, x.shape.w / window_, x.shape.c}};
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool>(name(), window_); }
  json to_json() const override {
    json j = Layer::to_json();
    j["window"] = window_;
    return j;
  }

 private:
  Index window_;
};

class GlobalAvgPool final : public Layer {
 public:
  using Layer::Layer;
  std::string_view type() const override { return "global_avg_pool"; }
  Activation forward(const Activation& x, const ForwardOptions&) override {
    return {global_avg_pool(x.data, x.shape), {x.shape.n, 1, 1, x.shape.c}};
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(name()); }
};

class Flatten final : public Layer {
 public:
  using Layer::Layer;
  std::string_view type() const override { return "flatten"; }
  Activation forward(const Activation& x, const ForwardOptions&) override {
    const Index features = x.shape.h * x.shape.w * x.shape.c;
    return {reshape(x.data, x.shape.n, features), {x.shape.n, 1, 1, features}};
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(name()); }
};

// y = x W + b with W stored as (in x out).
class Linear final : public Layer {
 public:
  Linear(std::string name, Index in_features, Index out_features, std::mt19937_64& rng, bool bias = true)
      : Layer(std::move(name)), in_(in_features), out_(out_features),
        weight_(Tensor::parameter(detail::he_normal(in_features, out_features, in_features, rng))),
        bias_(bias ? Tensor::parameter(Matrix::Zero(1, out_features)) : Tensor()) {}

  Linear(std::string name, Tensor weight, Tensor bias)
      : Layer(std::move(name)), in_(weight.rows()), out_(weight.cols()), weight_(std::move(weight)),
        bias_(std::move(bias)) {
    FRET_CHECK(!bias_.defined() || (bias_.rows() == 1 && bias_.cols() == out_), ErrorKind::kShapeMismatch,
               "linear bias shape");
  }

  std::string_view type() const override { return "linear"; }
  Index in_features() const { return in_; }
  Index out_features() const { return out_; }
  bool has_bias() const { return bias_.defined(); }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

  // Applies the affine map to an n x in matrix.
  Tensor apply(const Tensor& x, bool with_bias = true) const {
    FRET_CHECK(x.cols() == in_, ErrorKind::kShapeMismatch, name() + ": input width");
    Tensor y = matmul(x, weight_);
    return (with_bias && bias_.defined()) ? add_row(y, bias_) : y;
  }

  Activation forward(const Activation& x, const ForwardOptions&) override {
    FRET_CHECK(x.shape.h == 1 && x.shape.w == 1, ErrorKind::kShapeMismatch, name() + ": expects flat input");
    return {apply(x.data), {x.shape.n, 1, 1, out_}};
  }

  std::vector<ParamRef> params() override {
    std::vector<ParamRef> out{{name(), "weight", weight_, false}};
    if (bias_.defined()) out.push_back({name(), "bias", bias_, false});
    return out;
  }

  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<Linear>(name(), detail::copy_tensor(weight_),
                                    bias_.defined() ? detail::copy_tensor(bias_) : Tensor());
  }

  json to_json() const override {
    json j = Layer::to_json();
    j["in_features"] = in_;
    j["out_features"] = out_;
    j["tensors"] = {{"weight", detail::matrix_to_json(weight_.value())}};
    if (bias_.defined()) j["tensors"]["bias"] = detail::matrix_to_json(bias_.value());
    return j;
  }

 private:
  Index in_, out_;
  Tensor weight_;
  Tensor bias_;
};

struct InputShape {
  Index height = 0;
  Index width = 0;
  Index channels = 0;
};

class Sequential {
 public:
  Sequential() = default;
  explicit Sequential(InputShape input) : input_(input) {}

  Sequential(const Sequential& other) : input_(other.input_) {
    layers_.reserve(other.layers_.size());
    for (const auto& layer : other.layers_) layers_.push_back(layer->clone());
  }
  Sequential& operator=(const Sequential& other) {
    if (this != &other) *this = Sequential(other);
    return *this;
  }
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    for (const auto& existing : layers_) {
      FRET_CHECK(existing->name() != ref.name(), ErrorKind::kInvalidArgument, "duplicate layer name " + ref.name());
    }
    layers_.push_back(std::move(layer));
    return ref;
  }

  const InputShape& input_shape() const { return input_; }
  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

  std::ptrdiff_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i]->name() == name) return static_cast<std::ptrdiff_t>(i);
    }
    return -1;
  }

  // Runs layers [begin, end).
  Activation forward_range(Activation x, std::size_t begin, std::size_t end, const ForwardOptions& opts = {}) {
    for (std::size_t i = begin; i < end; ++i) x = layers_[i]->forward(x, opts);
    return x;
  }

  Activation forward(const Activation& x, const ForwardOptions& opts = {}) {
    return forward_range(x, 0, layers_.size(), opts);
  }

  Tensor forward(const ImageBatch& batch, const ForwardOptions& opts = {}) {
    return forward(to_activation(batch), opts).data;
  }

  std::vector<ParamRef> parameters() {
    std::vector<ParamRef> out;
    for (auto& layer : layers_) {
      for (auto& p : layer->params()) out.push_back(std::move(p));
    }
    return out;
  }

  std::vector<BatchNorm*> norm_layers() {
    std::vector<BatchNorm*> out;
    for (auto& layer : layers_) {
      if (auto* bn = dynamic_cast<BatchNorm*>(layer.get())) out.push_back(bn);
    }
    return out;
  }

  void set_norm_mode(NormMode mode) {
    for (auto* bn : norm_layers()) bn->set_mode(mode);
  }

  json to_json() const {
    json layers = json::array();
    for (const auto& layer : layers_) layers.push_back(layer->to_json());
    return json{{"format", "fret-checkpoint"},
                {"version", 1},
                {"input", {{"height", input_.height}, {"width", input_.width}, {"channels", input_.channels}}},
                {"layers", layers}};
  }

  static Sequential from_json(const json& j) {
    FRET_CHECK(j.value("format", "") == "fret-checkpoint", ErrorKind::kIoError, "not a fret checkpoint");
    FRET_CHECK(j.value("version", 0) == 1, ErrorKind::kIoError, "unsupported checkpoint version");
    const auto& in = j.at("input");
    Sequential net({in.at("height").get<Index>(), in.at("width").get<Index>(), in.at("channels").get<Index>()});
    for (const auto& l : j.at("layers")) {
      const auto name = l.at("name").get<std::string>();
      const auto type = l.at("type").get<std::string>();
      if (type == "conv2d") {
        const auto& t = l.at("tensors");
        net.add<Conv2d>(name, l.at("in_channels").get<Index>(), l.at("out_channels").get<Index>(),
                        l.at("kernel").get<Index>(), l.at("stride").get<Index>(), l.at("padding").get<Index>(),
                        Tensor::parameter(detail::matrix_from_json(t.at("weight"))),
                        Tensor::parameter(detail::matrix_from_json(t.at("bias"))));
      } else if (type == "batchnorm") {
        const auto& t = l.at("tensors");
        auto& bn = net.add<BatchNorm>(name, l.at("channels").get<Index>(), l.at("eps").get<double>(),
                                      l.at("momentum").get<double>());
        bn.set_affine(Tensor::parameter(detail::matrix_from_json(t.at("gamma"))),
                      Tensor::parameter(detail::matrix_from_json(t.at("beta"))));
        bn.set_running_stats(detail::matrix_from_json(t.at("running_mean")),
                             detail::matrix_from_json(t.at("running_var")));
      } else if (type == "relu") {
        net.add<ReLU>(name);
      } else if (type == "maxpool") {
        net.add<MaxPool>(name, l.at("window").get<Index>());
      } else if (type == "global_avg_pool") {
        net.add<GlobalAvgPool>(name);
      } else if (type == "flatten") {
        net.add<Flatten>(name);
      } else if (type == "linear") {
        const auto& t = l.at("tensors");
        Tensor bias = t.contains("bias") ? Tensor::parameter(detail::matrix_from_json(t.at("bias"))) : Tensor();
        net.add<Linear>(name, Tensor::parameter(detail::matrix_from_json(t.at("weight"))), std::move(bias));
      } else {
        throw Error(ErrorKind::kIoError, "unknown layer type '" + type + "'");
      }
    }
    return net;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    FRET_CHECK(out.good(), ErrorKind::kIoError, "cannot write " + path);
    out << to_json().dump();
  }

  static Sequential load(const std::string& path) {
    std::ifstream in(path);
    FRET_CHECK(in.good(), ErrorKind::kIoError, "cannot read " + path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kIoError, path + ": " + e.what());
    }
    return from_json(j);
  }

 private:
  InputShape input_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace fret::nn
