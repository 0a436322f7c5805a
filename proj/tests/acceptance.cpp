// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. Prints one PASS/FAIL line per criterion; with
// --criterion N only that one runs. Exit status is nonzero if any fails.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "fret/harness.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

namespace fret {
namespace {

using testing::random_matrix;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Shared desk-scale setup

constexpr std::uint64_t kTestDataSeed = 4242;  // disjoint from the training seed
const std::vector<double> kLrGrid{1e-4, 1e-3};
constexpr int kSeeds = 5;

SplitModel shipped_model() {
  SplitModel m = split(nn::Sequential::load(FRET_MODEL_PATH), "fc");
  m.set_norm_mode(nn::NormMode::kRunningStats);
  return m;
}

std::vector<CorruptionSpec> mixed_stream_specs() {
  std::vector<CorruptionSpec> specs;
  for (auto kind : {CorruptionKind::kGaussianNoise, CorruptionKind::kShotNoise, CorruptionKind::kImpulseNoise,
                    CorruptionKind::kContrast, CorruptionKind::kBrightness}) {
    specs.push_back({kind, 5});
  }
  return specs;
}

// Overall stream accuracy (final cumulative accuracy) of one run.
double final_accuracy(const std::vector<AdaptationRecord>& recs) { return recs.back().cumulative_accuracy.value(); }

struct GridResult {
  double lr = 0.0;
  double mean_accuracy = 0.0;
};

// Mean final accuracy over seeds for each lr in the grid; returns the best.
GridResult tune_lr(const SplitModel& model, const std::vector<Stream>& streams, Method method,
                   const std::vector<double>& grid) {
  std::vector<std::pair<double, std::uint64_t>> jobs;
  for (double lr : grid) {
    for (std::size_t s = 0; s < streams.size(); ++s) jobs.emplace_back(lr, s);
  }
  std::vector<double> acc(jobs.size());
  parallel_for(jobs.size(), worker_count(jobs.size()), [&](std::size_t i) {
    AdaptationConfig cfg;
    cfg.method = method;
    cfg.lr = jobs[i].first;
    cfg.seed = jobs[i].second;
    acc[i] = final_accuracy(run_stream(model, streams[jobs[i].second], cfg));
  });
  GridResult best{0.0, -1.0};
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double mean = 0.0;
    for (std::size_t s = 0; s < streams.size(); ++s) mean += acc[g * streams.size() + s];
    mean /= static_cast<double>(streams.size());
    if (mean > best.mean_accuracy) best = {grid[g], mean};
  }
  return best;
}

std::vector<Stream> seeded_streams(const Dataset& data, const std::vector<CorruptionSpec>& specs,
                                   std::optional<LongTailSpec> longtail) {
  std::vector<Stream> out;
  for (int s = 0; s < kSeeds; ++s) {
    StreamOptions o;
    o.seed = static_cast<std::uint64_t>(s);
    o.longtail = longtail;
    out.push_back(build_stream(data, specs, o));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Criteria

Outcome criterion1() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> nd(1, 16), dd(1, 8);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Matrix z = random_matrix(nd(rng), dd(rng), rng);
    worst = std::max(worst, std::abs(redundancy_score(z).value - testing::brute_force_redundancy(z)));
  }
  return {worst <= 1e-6, "100 matrices, max |diff| = " + sci(worst)};
}

Outcome criterion2() {
  std::mt19937_64 rng(102);
  double worst_s = 0.0, worst_c = 0.0, worst_e = 0.0, worst_n = 0.0;
  auto centers = [](const Matrix& c) {
    return ClassCenters{c, std::vector<bool>(static_cast<std::size_t>(c.rows()), true),
                        std::vector<long>(static_cast<std::size_t>(c.rows()), 1)};
  };
  for (int t = 0; t < 20; ++t) {
    const Matrix z = random_matrix(4, 3, rng);
    worst_s = std::max(worst_s, testing::gradient_error([](const Tensor& x) { return sfret_loss(x); }, z));

    const Matrix a = random_matrix(4, 3, rng), r = random_matrix(4, 3, rng);
    const ClassCenters c = centers(random_matrix(3, 3, rng));
    std::vector<Index> assign;
    for (int i = 0; i < 4; ++i) assign.push_back(static_cast<Index>(rng() % 3));
    worst_c = std::max(worst_c, testing::gradient_error(
                                    [&](const Tensor& x) { return contrastive_loss(x, Tensor::constant(r), c, assign); }, a));
    worst_c = std::max(worst_c, testing::gradient_error(
                                    [&](const Tensor& x) { return contrastive_loss(Tensor::constant(a), x, c, assign); }, r));

    const Matrix pa = random_matrix(4, 3, rng, -2, 2), pr = random_matrix(4, 3, rng, -2, 2);
    worst_e = std::max(worst_e, testing::gradient_error(
                                    [&](const Tensor& x) { return prediction_loss(x, Tensor::constant(pr)).entropy; }, pa));
    worst_n = std::max(worst_n, testing::gradient_error(
                                    [&](const Tensor& x) { return prediction_loss(x, Tensor::constant(pr)).negative; }, pa));
    worst_n = std::max(worst_n, testing::gradient_error(
                                    [&](const Tensor& x) { return prediction_loss(Tensor::constant(pa), x).negative; }, pr));
  }
  const double worst = std::max({worst_s, worst_c, worst_e, worst_n});
  return {worst < 1e-4, "max rel err sfret " + sci(worst_s) + ", contrastive " + sci(worst_c) +
                            ", entropy " + sci(worst_e) + ", negative " + sci(worst_n)};
}

Outcome criterion3() {
  std::mt19937_64 rng(103);
  bool exact = true;
  double worst_ratio = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Index d = 2 + t % 7;
    const Matrix z = random_matrix(6 + t % 5, d, rng);
    Tensor zt = Tensor::constant(z);
    const FeatureGraph g = feature_graph(zt);
    Matrix bin(d, d);
    for (Index i = 0; i < d; ++i) {
      for (Index j = 0; j <= i; ++j) bin(i, j) = bin(j, i) = static_cast<double>(rng() % 2);
    }
    for (const MaskMatrix& m : {MaskMatrix::identity(d), MaskMatrix::custom(bin)}) {
      const GraphPair p = decompose(g, m);
      exact = exact && (p.attention.value() + p.redundancy.value()) == g.value();
    }
    const nn::Linear head("fc", Tensor::constant(random_matrix(d, 3, rng)), Tensor::constant(random_matrix(1, 3, rng)));
    if (g.value().diagonal().minCoeff() <= 0.0) continue;
    const PropagatedBatch out = propagate(zt, decompose(g, MaskMatrix::identity(d)), head);
    worst_ratio = std::max(worst_ratio, (out.attention_repr.value() - z).cwiseAbs().maxCoeff() / z.cwiseAbs().maxCoeff());
  }
  return {exact && worst_ratio < 1e-5, std::string("additivity ") + (exact ? "exact" : "INEXACT") +
                                           ", max ||R_A - Z||/||Z|| = " + sci(worst_ratio)};
}

Outcome criterion4() {
  double worst = 0.0;
  for (Index n : {1, 3, 7}) {
    for (Index c : {2, 3, 10}) {
      const PredictionTerms t =
          prediction_loss(Tensor::constant(Matrix::Constant(n, c, 0.3)), Tensor::constant(Matrix::Zero(n, c)));
      worst = std::max(worst, std::abs(t.entropy.item() - static_cast<double>(n) * std::log(static_cast<double>(c))));
    }
  }
  Matrix pa(1, 2), pr(1, 2);
  pa << 10, -10;
  pr << 0.25, 0.25;  // softmax [0.5, 0.5]
  const double neg = prediction_loss(Tensor::constant(pa), Tensor::constant(pr)).negative.item();
  return {worst < 1e-6 && std::abs(neg - 10.0) < 1e-3,
          "uniform entropy max err " + sci(worst) + ", negative term " + fmt(neg, 9) + " (expected 10.0)"};
}

Outcome criterion5() {
  const SplitModel model = shipped_model();
  const Dataset data = make_shapes10(640, kTestDataSeed, 16);
  StreamOptions o;
  o.seed = 0;
  const std::vector<Stream> streams{build_stream(data, {{CorruptionKind::kGaussianNoise, 5}}, o)};
  const GridResult best = tune_lr(model, streams, Method::kSfret, kLrGrid);

  AdaptationConfig cfg;
  cfg.method = Method::kSfret;
  cfg.lr = best.lr;
  const auto recs = run_stream(model, streams[0], cfg);
  AdaptationConfig src;
  src.method = Method::kSource;
  const double source_acc = final_accuracy(run_stream(model, streams[0], src));
  const double nrs0 = recs.front().nrs, nrs_t = recs.back().nrs;
  const double acc = final_accuracy(recs);
  const bool pass = recs.size() >= 50 && nrs_t < 0.95 * nrs0 && acc >= source_acc;
  return {pass, std::to_string(recs.size()) + " steps, lr " + fmt(best.lr, 4) + ": NRS " + fmt(nrs0) + " -> " +
                    fmt(nrs_t) + ", accuracy " + fmt(acc) + " vs source " + fmt(source_acc)};
}

Outcome criterion6() {
  const SplitModel model = shipped_model();
  const Dataset data = make_shapes10(200, kTestDataSeed, 16);
  const auto rows = redundancy_sweep(model, data, {CorruptionKind::kGaussianNoise}, {1, 2, 3, 4, 5}, 128, 0);
  std::vector<double> r;
  for (const auto& row : rows) {
    if (row.severity >= 1) r.push_back(row.mean_redundancy);
  }
  int inversions = 0;
  bool within = true;
  std::string trace;
  for (std::size_t i = 0; i < r.size(); ++i) {
    trace += (i ? " " : "") + fmt(r[i], 2);
    if (i > 0 && r[i] < r[i - 1]) {
      ++inversions;
      within = within && (r[i - 1] - r[i]) <= 0.01 * r[i - 1];
    }
  }
  return {inversions <= 1 && within,
          "mean R_e sev1..5: " + trace + " (clean " + fmt(rows[0].mean_redundancy, 2) + "), inversions " +
              std::to_string(inversions)};
}

Outcome criterion7() {
  const SplitModel model = shipped_model();
  const Dataset data = make_shapes10(200, kTestDataSeed, 16);
  const auto streams = seeded_streams(data, mixed_stream_specs(), std::nullopt);
  const GridResult src = tune_lr(model, streams, Method::kSource, {0.0});
  const GridResult s = tune_lr(model, streams, Method::kSfret, kLrGrid);
  const GridResult g = tune_lr(model, streams, Method::kGfret, kLrGrid);
  const bool pass = g.mean_accuracy >= s.mean_accuracy && s.mean_accuracy >= src.mean_accuracy &&
                    g.mean_accuracy - src.mean_accuracy >= 0.01;
  return {pass, "mean accuracy over 5 seeds: gfret " + fmt(g.mean_accuracy) + " (lr " + fmt(g.lr) + "), sfret " +
                    fmt(s.mean_accuracy) + " (lr " + fmt(s.lr) + "), source " + fmt(src.mean_accuracy)};
}

Outcome criterion8() {
  const SplitModel model = shipped_model();
  const Dataset data = make_shapes10(200, kTestDataSeed, 16);
  const auto balanced = seeded_streams(data, mixed_stream_specs(), std::nullopt);
  const auto longtail = seeded_streams(data, mixed_stream_specs(), LongTailSpec{100.0, "exponential", std::nullopt});
  const GridResult s1 = tune_lr(model, balanced, Method::kSfret, kLrGrid);
  const GridResult s100 = tune_lr(model, longtail, Method::kSfret, kLrGrid);
  const GridResult g1 = tune_lr(model, balanced, Method::kGfret, kLrGrid);
  const GridResult g100 = tune_lr(model, longtail, Method::kGfret, kLrGrid);
  const double drop_s = s1.mean_accuracy - s100.mean_accuracy;
  const double drop_g = g1.mean_accuracy - g100.mean_accuracy;
  return {drop_s > drop_g, "accuracy drop IF=1 -> IF=100: sfret " + fmt(drop_s) + " (" + fmt(s1.mean_accuracy) +
                               " -> " + fmt(s100.mean_accuracy) + "), gfret " + fmt(drop_g) + " (" +
                               fmt(g1.mean_accuracy) + " -> " + fmt(g100.mean_accuracy) + ")"};
}

Outcome criterion9() {
  std::mt19937_64 rng(109);
  int topk_ok = 0, cons_ok = 0, soft_ok = 0, mono_ok = 0;
  for (int t = 0; t < 100; ++t) {
    const Index n = 4 + static_cast<Index>(rng() % 20), c = 2 + static_cast<Index>(rng() % 4);
    const Matrix logits = random_matrix(n, c, rng, -3, 3);
    const EntropyScores h = entropy(logits);
    const long k1 = 1 + static_cast<long>(rng() % 6);
    topk_ok += topk_per_class(h, logits, k1) == testing::brute_topk_per_class(h.h, logits, k1);

    const Matrix r = random_matrix(n, 5, rng);
    ClassCenters centers{random_matrix(c, 5, rng), std::vector<bool>(static_cast<std::size_t>(c), true),
                         std::vector<long>(static_cast<std::size_t>(c), 1)};
    centers.valid[static_cast<std::size_t>(t) % static_cast<std::size_t>(c)] = t % 3 != 0;
    const SoftPseudoLabels y = soft_pseudo_labels(r, centers);
    soft_ok += (y.y_hat - testing::brute_soft_labels(r, centers.centers, centers.valid)).cwiseAbs().maxCoeff() < 1e-12;

    const double k2 = 0.05 + 0.95 * static_cast<double>(rng() % 1000) / 999.0;
    cons_ok += consistency_filter(h, logits, y, k2) == testing::brute_consistency(h.h, logits, y.y_hat, k2);

    bool mono = true;
    std::vector<Index> prev;
    for (double k : {0.1, 0.25, 0.5, 0.75, 0.9, 1.0}) {
      const auto cur = consistency_filter(h, logits, y, k);
      mono = mono && std::includes(cur.begin(), cur.end(), prev.begin(), prev.end());
      prev = cur;
    }
    mono_ok += mono;
  }
  return {topk_ok == 100 && cons_ok == 100 && soft_ok == 100 && mono_ok == 100,
          "oracle matches: topk " + std::to_string(topk_ok) + "/100, consistency " + std::to_string(cons_ok) +
              "/100, soft labels " + std::to_string(soft_ok) + "/100, K2 monotone " + std::to_string(mono_ok) + "/100"};
}

Outcome criterion10() {
  const SplitModel model = shipped_model();
  const Dataset data = make_shapes10(24, kTestDataSeed, 16);
  StreamOptions o;
  o.batch_size = 48;
  o.seed = 3;
  const Stream stream = build_stream(data, {{CorruptionKind::kGaussianNoise, 3}, {CorruptionKind::kContrast, 4}}, o);
  auto dump = [](const std::vector<AdaptationRecord>& recs) {
    std::vector<std::string> out;
    for (const auto& r : recs) out.push_back(to_json(r).dump());
    return out;
  };
  bool rerun = true, prefix = true;
  for (auto method : {Method::kSfret, Method::kGfret, Method::kEntropyMin, Method::kBnRecal}) {
    for (auto protocol : {Protocol::kContinuous, Protocol::kIndependent}) {
      AdaptationConfig cfg;
      cfg.method = method;
      cfg.lr = 1e-3;
      cfg.k1 = 5;
      cfg.protocol = protocol;
      const auto full = dump(run_stream(model, stream, cfg));
      rerun = rerun && dump(run_stream(model, stream, cfg)) == full;
      for (std::size_t t = 1; t < stream.batches.size(); ++t) {
        Stream cut;
        cut.segment_tags = stream.segment_tags;
        cut.batches.assign(stream.batches.begin(), stream.batches.begin() + static_cast<std::ptrdiff_t>(t));
        const auto p = dump(run_stream(model, cut, cfg));
        prefix = prefix && std::equal(p.begin(), p.end(), full.begin());
      }
    }
  }
  return {rerun && prefix, std::to_string(stream.batches.size()) + "-step stream, 4 methods x 2 protocols: rerun " +
                               (rerun ? "identical" : "DIFFERS") + ", prefixes " + (prefix ? "bit-identical" : "DIFFER")};
}

struct Criterion {
  int id;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace fret

int main(int argc, char** argv) {
  using namespace fret;
  CLI::App app{"acceptance checks"};
  int only = 0;
  app.add_option("--criterion", only, "run a single criterion (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all{{1, 5, criterion1},    {2, 30, criterion2},   {3, 5, criterion3},
                                   {4, 5, criterion4},    {5, 600, criterion5},  {6, 300, criterion6},
                                   {7, 3600, criterion7}, {8, 3600, criterion8}, {9, 10, criterion9},
                                   {10, 120, criterion10}};
  bool all_pass = true;
  for (const auto& c : all) {
    if (only != 0 && c.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.limit_seconds;
    const bool pass = out.pass && in_time;
    all_pass = all_pass && pass;
    std::cout << "criterion " << c.id << ": " << (pass ? "PASS" : "FAIL") << "  " << out.detail << " ["
              << std::fixed << std::setprecision(1) << secs << " s" << (in_time ? "" : ", over time limit") << "]"
              << std::endl;
  }
  return all_pass ? 0 : 1;
}
