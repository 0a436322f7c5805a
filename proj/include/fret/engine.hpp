// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
//
// Online test-time adaptation. Each incoming batch is predicted with the
// parameters adapted so far; the same forward pass feeds the method's loss
// and at most one optimizer step is taken before the next batch arrives.
#pragma once

#include "json.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fret/data.hpp"
#include "fret/filters.hpp"
#include "fret/graph.hpp"
#include "fret/model.hpp"
#include "fret/objectives.hpp"
#include "fret/optim.hpp"
#include "fret/redundancy.hpp"

namespace fret {

enum class Method { kSource, kBnRecal, kEntropyMin, kSfret, kGfret };

inline constexpr std::array<std::string_view, 5> kMethodNames{"source", "bn_recal", "entropy_min", "sfret", "gfret"};

inline std::string_view to_string(Method m) { return kMethodNames[static_cast<std::size_t>(m)]; }

inline Method parse_method(std::string_view s) {
  for (std::size_t i = 0; i < kMethodNames.size(); ++i) {
    if (kMethodNames[i] == s) return static_cast<Method>(i);
  }
  throw Error(ErrorKind::kConfigError, "unknown method '" + std::string(s) + "'");
}

inline bool is_training_method(Method m) {
  return m == Method::kEntropyMin || m == Method::kSfret || m == Method::kGfret;
}

enum class Protocol { kContinuous, kIndependent };

inline std::string_view to_string(Protocol p) { return p == Protocol::kContinuous ? "continuous" : "independent"; }

inline Protocol parse_protocol(std::string_view s) {
  if (s == "continuous") return Protocol::kContinuous;
  if (s == "independent") return Protocol::kIndependent;
  throw Error(ErrorKind::kConfigError, "unknown protocol '" + std::string(s) + "'");
}

struct AdaptationConfig {
  Method method = Method::kSfret;
  double lr = 1e-4;
  double lambda = 1.0;  // G-FRET only
  long k1 = 100;        // G-FRET only
  double k2 = 0.9;      // G-FRET only
  ParamPolicy param_policy;
  std::size_t batch_size = 128;
  Protocol protocol = Protocol::kContinuous;
  std::uint64_t seed = 0;

  OptimizerKind optimizer = OptimizerKind::kSgd;
  double momentum = 0.0;
  // Training methods normalize with test-batch statistics.
  bool use_batch_stats = true;
  bool head_bias_in_projection = true;
  bool detach_graph = false;
  bool use_filters = true;
  std::optional<Matrix> mask;  // identity when unset

  void validate() const {
    FRET_CHECK(lr >= 0.0, ErrorKind::kConfigError, "lr must be nonnegative");
    FRET_CHECK(batch_size >= 1, ErrorKind::kConfigError, "batch_size must be positive");
    if (method == Method::kGfret) {
      FRET_CHECK(lambda >= 0.0, ErrorKind::kConfigError, "lambda must be nonnegative");
      FRET_CHECK(k1 >= 1, ErrorKind::kConfigError, "k1 must be positive");
      FRET_CHECK(k2 > 0.0 && k2 <= 1.0, ErrorKind::kConfigError, "k2 must lie in (0, 1]");
    }
  }
};

struct AdaptationRecord {
  long step = 0;
  long n_seen = 0;
  std::size_t segment = 0;
  std::size_t batch_size = 0;
  std::optional<long> batch_correct;
  std::optional<double> batch_accuracy;
  std::optional<double> cumulative_accuracy;
  double loss = 0.0;
  std::optional<LossBreakdown> breakdown;
  RedundancyScore redundancy;
  double nrs = 0.0;
  bool skipped = false;
  std::string skip_reason;
  std::size_t kept = 0;
  std::size_t dropped = 0;
};

inline nlohmann::json to_json(const AdaptationRecord& r) {
  nlohmann::json j = {{"step", r.step},
                      {"n_seen", r.n_seen},
                      {"segment", r.segment},
                      {"batch_size", r.batch_size},
                      {"loss", r.loss},
                      {"redundancy", {{"value", r.redundancy.value},
                                      {"dim", r.redundancy.dim},
                                      {"batch_size", r.redundancy.batch_size}}},
                      {"nrs", r.nrs},
                      {"skipped", r.skipped},
                      {"kept", r.kept},
                      {"dropped", r.dropped}};
  j["batch_correct"] = r.batch_correct ? nlohmann::json(*r.batch_correct) : nlohmann::json(nullptr);
  j["batch_accuracy"] = r.batch_accuracy ? nlohmann::json(*r.batch_accuracy) : nlohmann::json(nullptr);
  j["cumulative_accuracy"] = r.cumulative_accuracy ? nlohmann::json(*r.cumulative_accuracy) : nlohmann::json(nullptr);
  if (r.breakdown) {
    j["loss_terms"] = {{"l_r", r.breakdown->l_r},
                       {"l_p_entropy", r.breakdown->l_p_entropy},
                       {"l_p_negative", r.breakdown->l_p_negative},
                       {"total", r.breakdown->total},
                       {"lambda", r.breakdown->lambda}};
  }
  if (r.skipped) j["skip_reason"] = r.skip_reason;
  return j;
}

inline AdaptationRecord record_from_json(const nlohmann::json& j) {
  AdaptationRecord r;
  r.step = j.at("step").get<long>();
  r.n_seen = j.at("n_seen").get<long>();
  r.segment = j.at("segment").get<std::size_t>();
  r.batch_size = j.value("batch_size", std::size_t{0});
  r.loss = j.at("loss").get<double>();
  r.redundancy = {j.at("redundancy").at("value").get<double>(), j.at("redundancy").at("dim").get<Index>(),
                  j.at("redundancy").at("batch_size").get<Index>()};
  r.nrs = j.at("nrs").get<double>();
  r.skipped = j.at("skipped").get<bool>();
  r.kept = j.value("kept", std::size_t{0});
  r.dropped = j.value("dropped", std::size_t{0});
  if (!j.at("batch_correct").is_null()) r.batch_correct = j.at("batch_correct").get<long>();
  if (!j.at("batch_accuracy").is_null()) r.batch_accuracy = j.at("batch_accuracy").get<double>();
  if (!j.at("cumulative_accuracy").is_null()) r.cumulative_accuracy = j.at("cumulative_accuracy").get<double>();
  if (j.contains("loss_terms")) {
    const auto& t = j.at("loss_terms");
    r.breakdown = LossBreakdown{t.at("l_r").get<double>(), t.at("l_p_entropy").get<double>(),
                                t.at("l_p_negative").get<double>(), t.at("total").get<double>(),
                                t.at("lambda").get<double>()};
  }
  if (j.contains("skip_reason")) r.skip_reason = j.at("skip_reason").get<std::string>();
  return r;
}

// Mean Shannon entropy of the softmaxed logits.
inline Tensor baseline_entropy_min(const Tensor& logits) {
  FRET_CHECK(logits.rows() >= 1, ErrorKind::kShapeMismatch, "entropy_min: empty batch");
  Tensor log_p = log_softmax(logits);
  return scale(sum(mul(exp(log_p), log_p)), -1.0 / static_cast<double>(logits.rows()));
}

// Switches every normalization layer to current-batch statistics.
inline SplitModel baseline_bn_recal(SplitModel model) {
  FRET_CHECK(!model.network().norm_layers().empty(), ErrorKind::kNoNormLayers, "model has no normalization layers");
  model.set_norm_mode(nn::NormMode::kBatchStats);
  return model;
}

struct StepResult {
  std::vector<Index> predictions;
  AdaptationRecord record;
};

class Adapter {
 public:
  Adapter(const SplitModel& source, AdaptationConfig cfg) : source_(source), model_(source), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (cfg_.mask) {
      mask_ = MaskMatrix::custom(*cfg_.mask);
    } else {
      mask_ = MaskMatrix::identity(source.embed_dim());
    }
    FRET_CHECK(mask_->dim() == source.embed_dim(), ErrorKind::kConfigError, "mask dimension != embed_dim");
    configure();
  }

  SplitModel& model() { return model_; }
  const AdaptationConfig& config() const { return cfg_; }
  const NrsTrace& trace() const { return trace_; }
  long steps_taken() const { return step_; }

  // Restores the source parameters and clears optimizer and trace state.
  void reset() {
    model_ = source_;
    trace_ = NrsTrace();
    configure();
  }

  StepResult adapt_step(const ImageBatch& batch) {
    const bool training = is_training_method(cfg_.method);
    StepResult out;
    AdaptationRecord& rec = out.record;
    rec.step = step_;
    rec.batch_size = batch.n;

    std::optional<NoGradGuard> no_grad;
    if (!training) no_grad.emplace();
    ModelOutput fwd = model_.forward(batch);
    out.predictions = argmax_rows(fwd.logits.value());
    rec.redundancy = redundancy_score(fwd.embeddings.value());
    trace_.record(step_, rec.redundancy.value);
    rec.nrs = trace_.normalized().back();
    rec.kept = batch.n;

    if (training) {
      Tensor loss = method_loss(fwd, rec);
      if (!rec.skipped) apply_update(loss, rec);
    }
    ++step_;
    return out;
  }

  // Runs the stream in order; accuracy fields use the stream labels, which
  // never reach the adaptation path.
  std::vector<AdaptationRecord> run_stream(const Stream& stream) {
    std::vector<AdaptationRecord> records;
    records.reserve(stream.batches.size());
    long seen = 0;
    long correct = 0;
    std::optional<std::size_t> segment;
    for (const auto& b : stream.batches) {
      if (cfg_.protocol == Protocol::kIndependent && segment && *segment != b.segment) reset();
      segment = b.segment;
      StepResult res = adapt_step(b.images);
      AdaptationRecord rec = std::move(res.record);
      rec.segment = b.segment;
      seen += static_cast<long>(b.images.n);
      rec.n_seen = seen;
      if (b.labels.size() == b.images.n) {
        long hit = 0;
        for (std::size_t i = 0; i < b.labels.size(); ++i) hit += res.predictions[i] == b.labels[i] ? 1 : 0;
        correct += hit;
        rec.batch_correct = hit;
        rec.batch_accuracy = static_cast<double>(hit) / static_cast<double>(b.images.n);
        rec.cumulative_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
      }
      records.push_back(std::move(rec));
    }
    return records;
  }

 private:
  void configure() {
    for (auto& p : model_.parameters()) p.tensor.set_requires_grad(false);
    optimizer_.reset();
    switch (cfg_.method) {
      case Method::kSource:
        model_.set_norm_mode(nn::NormMode::kRunningStats);
        break;
      case Method::kBnRecal:
        model_ = baseline_bn_recal(std::move(model_));
        break;
      default: {
        model_.set_norm_mode(cfg_.use_batch_stats ? nn::NormMode::kBatchStats : nn::NormMode::kRunningStats);
        auto params = trainable_params(model_, cfg_.param_policy);
        OptimizerConfig oc;
        oc.kind = cfg_.optimizer;
        oc.lr = cfg_.lr;
        oc.momentum = cfg_.momentum;
        optimizer_.emplace(std::move(params), oc);
        break;
      }
    }
  }

  void skip(AdaptationRecord& rec, std::string reason) {
    rec.skipped = true;
    rec.skip_reason = std::move(reason);
  }

  Tensor method_loss(const ModelOutput& fwd, AdaptationRecord& rec) {
    try {
      switch (cfg_.method) {
        case Method::kEntropyMin: {
          Tensor loss = baseline_entropy_min(fwd.logits);
          rec.loss = loss.item();
          return loss;
        }
        case Method::kSfret: {
          Tensor loss = sfret_loss(fwd.embeddings);
          rec.loss = loss.item();
          return loss;
        }
        case Method::kGfret:
          return gfret_step_loss(fwd, rec);
        default:
          break;
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNonFiniteLoss) throw;
      skip(rec, "non_finite_loss");
    }
    return Tensor();
  }

  Tensor gfret_step_loss(const ModelOutput& fwd, AdaptationRecord& rec) {
    const Tensor& z = fwd.embeddings;
    const Matrix& logits = fwd.logits.value();
    const auto n = static_cast<std::size_t>(z.rows());

    FeatureGraph gf = feature_graph(cfg_.detach_graph ? z.detach() : z);
    GraphPair pair = decompose(gf, *mask_);
    PropagatedBatch prop = propagate(z, pair, model_.head(), cfg_.head_bias_in_projection);

    std::vector<Index> center_rows = detail::all_indices(n);
    std::vector<Index> keep = center_rows;
    EntropyScores h = entropy(logits);
    if (cfg_.use_filters) center_rows = topk_per_class(h, logits, cfg_.k1);
    ClassCenters centers = class_centers(z.value(), logits, center_rows);
    if (cfg_.use_filters) {
      SoftPseudoLabels y_hat = soft_pseudo_labels(prop.attention_repr.value(), centers);
      keep = consistency_filter(h, logits, y_hat, cfg_.k2);
    }
    rec.kept = keep.size();
    rec.dropped = n - keep.size();
    if (keep.empty()) {
      skip(rec, "empty_filter");
      return Tensor();
    }

    std::vector<Index> assign;
    assign.reserve(keep.size());
    for (Index i : keep) assign.push_back(argmax_row(logits, i));
    GfretLoss loss = gfret_loss(select_rows(prop.attention_repr, keep), select_rows(prop.redundancy_repr, keep),
                                select_rows(prop.attention_pred, keep), select_rows(prop.redundancy_pred, keep),
                                centers, assign, cfg_.lambda);
    rec.breakdown = loss.breakdown;
    rec.loss = loss.breakdown.total;
    return loss.total;
  }

  void apply_update(const Tensor& loss, AdaptationRecord& rec) {
    if (!std::isfinite(loss.item())) {
      skip(rec, "non_finite_loss");
      return;
    }
    optimizer_->zero_grad();
    backward(loss);
    for (const auto& p : optimizer_->params()) {
      if (p.tensor.has_grad() && !p.tensor.grad().allFinite()) {
        optimizer_->zero_grad();
        skip(rec, "non_finite_gradient");
        return;
      }
    }
    optimizer_->step();
    optimizer_->zero_grad();
  }

  SplitModel source_;
  SplitModel model_;
  AdaptationConfig cfg_;
  std::optional<MaskMatrix> mask_;
  std::optional<Optimizer> optimizer_;
  NrsTrace trace_;
  long step_ = 0;
};

inline std::vector<AdaptationRecord> run_stream(const SplitModel& source, const Stream& stream,
                                                const AdaptationConfig& cfg) {
  Adapter adapter(source, cfg);
  return adapter.run_stream(stream);
}

}  // namespace fret
