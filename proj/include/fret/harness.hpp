// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration: parallel adaptation runs, artifacts and sweeps.
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include "fret/config.hpp"
#include "fret/data.hpp"
#include "fret/engine.hpp"
#include "fret/plot.hpp"
#include "fret/report.hpp"

namespace fret {

// Parallelism for `jobs` tasks, capped by FRET_NUM_WORKERS when set.
inline std::size_t worker_count(std::size_t jobs) {
  std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FRET_NUM_WORKERS")) {
    try {
      const long cap = std::stol(env);
      if (cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
    } catch (const std::exception&) {
      throw Error(ErrorKind::kConfigError, std::string("FRET_NUM_WORKERS is not an integer: ") + env);
    }
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. Every task runs;
// the first exception is rethrown afterwards.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first) first = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (first) std::rethrow_exception(first);
}

inline Dataset load_base_dataset(const ExperimentConfig& cfg) {
  if (cfg.synthetic) return make_shapes10(cfg.synthetic->per_class, cfg.synthetic->seed, cfg.synthetic->size);
  return load_dataset(*cfg.dataset);
}

inline SplitModel load_source_model(const ExperimentConfig& cfg) {
  SplitModel model = split(nn::Sequential::load(cfg.checkpoint.string()), cfg.cut);
  model.set_norm_mode(nn::NormMode::kRunningStats);
  return model;
}

inline StreamOptions stream_options(const ExperimentConfig& cfg, std::uint64_t seed) {
  StreamOptions opts;
  opts.batch_size = cfg.adaptation.batch_size;
  opts.longtail = cfg.longtail;
  opts.seed = seed;
  opts.preset = cfg.preset;
  opts.precorrupted_root = cfg.precorrupted_root;
  return opts;
}

struct RunTrace {
  std::string method;
  std::uint64_t seed = 0;
  std::vector<AdaptationRecord> records;
  std::vector<std::string> segment_tags;
  double wall_seconds = 0.0;
};

struct ExperimentResult {
  std::vector<SummaryRow> rows;  // sorted
  std::vector<RunTrace> traces;  // sorted by (method, seed)
};

namespace detail {

// Mean over runs of a per-step quantity, truncated to the shortest run.
inline plot::Series mean_series(const std::string& label, const std::vector<const std::vector<AdaptationRecord>*>& runs,
                                double (*value)(const AdaptationRecord&)) {
  plot::Series s{label, {}, {}};
  if (runs.empty()) return s;
  std::size_t len = runs.front()->size();
  for (const auto* r : runs) len = std::min(len, r->size());
  for (std::size_t t = 0; t < len; ++t) {
    double acc = 0.0;
    for (const auto* r : runs) acc += value((*r)[t]);
    s.x.push_back(static_cast<double>((*runs.front())[t].step));
    s.y.push_back(acc / static_cast<double>(runs.size()));
  }
  return s;
}

inline double nrs_of(const AdaptationRecord& r) { return r.nrs; }
inline double loss_of(const AdaptationRecord& r) { return r.loss; }
inline double accuracy_of(const AdaptationRecord& r) {
  return r.cumulative_accuracy.value_or(std::numeric_limits<double>::quiet_NaN());
}

}  // namespace detail

struct NamedFigure {
  std::string file;
  plot::Figure figure;
};

// NRS, loss and cumulative accuracy against step, one series per method
// (mean across that method's runs).
inline std::vector<NamedFigure> trace_figures(
    const std::map<std::string, std::vector<std::vector<AdaptationRecord>>>& by_method) {
  std::size_t total = 0;
  for (const auto& [m, runs] : by_method) {
    for (const auto& r : runs) total += r.size();
  }
  FRET_CHECK(total > 0, ErrorKind::kEmptyRecords, "no records to plot");
  struct Panel {
    const char* file;
    const char* title;
    const char* y_label;
    double (*value)(const AdaptationRecord&);
  };
  const Panel panels[] = {{"nrs.png", "Normalized redundancy", "NRS", detail::nrs_of},
                          {"loss.png", "Adaptation loss", "loss", detail::loss_of},
                          {"accuracy.png", "Cumulative accuracy", "accuracy", detail::accuracy_of}};
  std::vector<NamedFigure> out;
  for (const Panel& p : panels) {
    plot::Figure fig{p.title, "step", p.y_label, {}};
    for (const auto& [method, runs] : by_method) {
      std::vector<const std::vector<AdaptationRecord>*> nonempty;
      for (const auto& r : runs) {
        if (!r.empty()) nonempty.push_back(&r);
      }
      if (!nonempty.empty()) fig.series.push_back(detail::mean_series(method, nonempty, p.value));
    }
    out.push_back({p.file, std::move(fig)});
  }
  return out;
}

// Writes the trace figures as PNGs under `out_dir`; returns the files.
inline std::vector<std::filesystem::path> plot_traces(
    const std::map<std::string, std::vector<std::vector<AdaptationRecord>>>& by_method,
    const std::filesystem::path& out_dir) {
  const auto figures = trace_figures(by_method);
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& f : figures) {
    const auto path = out_dir / f.file;
    try {
      plot::save(f.figure, path);
    } catch (const Error& e) {
      // A panel with no finite values (unlabeled accuracy) is omitted.
      if (e.kind() != ErrorKind::kEmptyRecords) throw;
      continue;
    }
    written.push_back(path);
  }
  return written;
}

// Reads every steps.<method>.<seed>.jsonl in `run_dir`.
inline std::map<std::string, std::vector<std::vector<AdaptationRecord>>> read_step_logs(
    const std::filesystem::path& run_dir) {
  FRET_CHECK(std::filesystem::is_directory(run_dir), ErrorKind::kIoError, "not a directory: " + run_dir.string());
  static const std::regex kName(R"(steps\.([A-Za-z_]+)\.(\d+)\.jsonl)");
  std::map<std::string, std::map<std::uint64_t, std::vector<AdaptationRecord>>> found;
  for (const auto& entry : std::filesystem::directory_iterator(run_dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, m, kName)) continue;
    found[m[1].str()][std::stoull(m[2].str())] = read_jsonl(entry.path());
  }
  std::map<std::string, std::vector<std::vector<AdaptationRecord>>> out;
  for (auto& [method, seeds] : found) {
    for (auto& [seed, recs] : seeds) out[method].push_back(std::move(recs));
  }
  return out;
}

struct RunOptions {
  bool write_artifacts = true;
  std::ostream* log = nullptr;
};

// One adaptation run per (method, seed). ConfigError is raised before any
// file is written; a failing run leaves the other runs' logs in place and
// surfaces as RuntimeFailure.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& ropts = {}) {
  cfg.validate();
  const Dataset base = load_base_dataset(cfg);
  const SplitModel source = load_source_model(cfg);

  std::vector<std::pair<std::string, std::uint64_t>> jobs;
  for (const auto& m : cfg.methods) {
    for (auto s : cfg.seeds) jobs.emplace_back(m, s);
  }
  std::sort(jobs.begin(), jobs.end());
  jobs.erase(std::unique(jobs.begin(), jobs.end()), jobs.end());

  if (ropts.write_artifacts) std::filesystem::create_directories(cfg.out_dir);

  std::map<std::uint64_t, Stream> streams;
  for (auto s : cfg.seeds) streams.emplace(s, build_stream(base, cfg.corruptions, stream_options(cfg, s)));

  std::vector<RunTrace> traces(jobs.size());
  std::vector<std::string> failures(jobs.size());
  std::mutex log_mu;
  parallel_for(jobs.size(), worker_count(jobs.size()), [&](std::size_t i) {
    const auto& [method, seed] = jobs[i];
    RunTrace& tr = traces[i];
    tr.method = method;
    tr.seed = seed;
    const Stream& stream = streams.at(seed);
    tr.segment_tags = stream.segment_tags;
    try {
      const auto t0 = std::chrono::steady_clock::now();
      Adapter adapter(source, cfg.adaptation_for(method, seed));
      tr.records = adapter.run_stream(stream);
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
      tr.wall_seconds = std::max(dt.count(), 1e-9);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
    if (ropts.write_artifacts && !tr.records.empty()) {
      write_jsonl(tr.records, cfg.out_dir / steps_filename(method, seed));
      write_nrs_csv(tr.records, cfg.out_dir / nrs_filename(method, seed));
    }
    if (ropts.log) {
      std::lock_guard<std::mutex> lock(log_mu);
      *ropts.log << method << " seed " << seed << ": "
                 << (failures[i].empty() ? std::to_string(tr.records.size()) + " steps" : "FAILED " + failures[i])
                 << '\n';
    }
  });

  std::string failed;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!failures[i].empty()) failed += " [" + jobs[i].first + "/" + std::to_string(jobs[i].second) + ": " + failures[i] + "]";
  }
  FRET_CHECK(failed.empty(), ErrorKind::kRuntimeFailure, "runs failed:" + failed);

  ExperimentResult result;
  const std::string protocol(to_string(cfg.adaptation.protocol));
  for (const auto& tr : traces) {
    auto rows = summarize_run(tr.records, tr.segment_tags, tr.method, protocol, tr.seed, tr.wall_seconds);
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  }
  std::sort(result.rows.begin(), result.rows.end(), row_order);
  result.traces = std::move(traces);

  if (ropts.write_artifacts) {
    write_summary_csv(result.rows, cfg.out_dir / "summary.csv");
    std::map<std::string, std::vector<std::vector<AdaptationRecord>>> by_method;
    for (const auto& tr : result.traces) by_method[tr.method].push_back(tr.records);
    plot_traces(by_method, cfg.out_dir / "plots");
  }
  return result;
}

struct SweepRow {
  std::string kind;
  int severity = 0;  // 0 is the clean baseline
  double mean_redundancy = 0.0;
  std::size_t batches = 0;
};

// Mean R_e of the frozen model's embeddings per (kind, severity) over
// full-size batches (a single short batch if the dataset is smaller).
inline std::vector<SweepRow> redundancy_sweep(const SplitModel& source, const Dataset& data,
                                              const std::vector<CorruptionKind>& kinds, const std::vector<int>& severities,
                                              std::size_t batch_size = 128, std::uint64_t seed = 0,
                                              SeverityPreset preset = SeverityPreset::kSmallImage) {
  FRET_CHECK(batch_size >= 2, ErrorKind::kInvalidArgument, "sweep batch size must be at least 2");
  FRET_CHECK(data.size() >= 2, ErrorKind::kInsufficientSamples, "sweep needs at least two samples");
  SplitModel model = source;
  model.set_norm_mode(nn::NormMode::kRunningStats);
  const nn::ForwardOptions fwd{false};
  auto mean_re = [&](const ImageBatch& images, std::size_t& batches) {
    const std::size_t bs = std::min(batch_size, images.n);
    double total = 0.0;
    batches = 0;
    NoGradGuard guard;
    for (std::size_t start = 0; start + bs <= images.n; start += bs) {
      std::vector<std::size_t> idx(bs);
      std::iota(idx.begin(), idx.end(), start);
      total += redundancy_score(model.encode(gather(images, idx), fwd).value()).value;
      ++batches;
    }
    return total / static_cast<double>(batches);
  };
  std::vector<int> sev = severities;
  std::sort(sev.begin(), sev.end());
  sev.erase(std::unique(sev.begin(), sev.end()), sev.end());
  std::vector<SweepRow> rows;
  for (CorruptionKind kind : kinds) {
    SweepRow clean{std::string(to_string(kind)), 0, 0.0, 0};
    clean.mean_redundancy = mean_re(data.images, clean.batches);
    rows.push_back(clean);
    for (int s : sev) {
      const CorruptionSpec spec{kind, s};
      SweepRow row{std::string(to_string(kind)), s, 0.0, 0};
      row.mean_redundancy = mean_re(corrupt(data.images, spec, mix_seed(seed, static_cast<std::uint64_t>(s)), preset),
                                    row.batches);
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  FRET_CHECK(out.good(), ErrorKind::kIoError, "cannot write " + path.string());
  out << "kind,severity,mean_redundancy,batches\n" << std::setprecision(17);
  for (const auto& r : rows) out << r.kind << ',' << r.severity << ',' << r.mean_redundancy << ',' << r.batches << '\n';
}

inline plot::Figure sweep_figure(const std::vector<SweepRow>& rows) {
  plot::Figure fig{"Redundancy vs severity", "severity", "mean redundancy", {}};
  std::map<std::string, plot::Series> by_kind;
  for (const auto& r : rows) {
    auto& s = by_kind[r.kind];
    s.label = r.kind;
    s.x.push_back(r.severity);
    s.y.push_back(r.mean_redundancy);
  }
  for (auto& [k, s] : by_kind) fig.series.push_back(std::move(s));
  return fig;
}

// Sweep over the configured kinds/severities on the clean base dataset.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, bool write_artifacts = true) {
  cfg.validate();
  const Dataset base = load_base_dataset(cfg);
  const SplitModel source = load_source_model(cfg);
  auto rows = redundancy_sweep(source, base, cfg.sweep_kinds, cfg.sweep_severities, cfg.adaptation.batch_size,
                               cfg.seeds.front(), cfg.preset);
  if (write_artifacts) {
    std::filesystem::create_directories(cfg.out_dir / "plots");
    write_sweep_csv(rows, cfg.out_dir / "sweep.csv");
    plot::save(sweep_figure(rows), cfg.out_dir / "plots" / "sweep.png");
  }
  return rows;
}

}  // namespace fret
