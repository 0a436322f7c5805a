// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
//
// Step logs, summary tables and per-run aggregates.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "fret/engine.hpp"

namespace fret {

struct SummaryRow {
  std::string method;
  std::string protocol;
  std::string segment;  // corruption tag, or "all" for the whole stream
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double nrs_slope = 0.0;
  double wall_seconds = 0.0;
  long samples = 0;
  long skipped_steps = 0;
};

inline bool row_order(const SummaryRow& a, const SummaryRow& b) {
  return std::tie(a.method, a.protocol, a.segment, a.seed) < std::tie(b.method, b.protocol, b.segment, b.seed);
}

// Least-squares slope of y against x; 0 for fewer than two points.
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = std::min(x.size(), y.size());
  if (n < 2) return 0.0;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

// One row per segment, plus an "all" row when there are several segments.
// Accuracy counts only labeled batches; NRS slope is taken per step within
// the segment and averaged for "all".
inline std::vector<SummaryRow> summarize_run(const std::vector<AdaptationRecord>& records,
                                             const std::vector<std::string>& segment_tags, std::string_view method,
                                             std::string_view protocol, std::uint64_t seed, double wall_seconds) {
  struct Acc {
    long correct = 0, seen = 0, skipped = 0;
    std::vector<double> steps, nrs;
  };
  std::vector<Acc> per(segment_tags.size());
  Acc total;
  for (const auto& r : records) {
    FRET_CHECK(r.segment < per.size(), ErrorKind::kRuntimeFailure, "record segment out of range");
    for (Acc* a : {&per[r.segment], &total}) {
      a->correct += r.batch_correct.value_or(0);
      a->seen += static_cast<long>(r.batch_size);
      a->skipped += r.skipped ? 1 : 0;
    }
    per[r.segment].steps.push_back(static_cast<double>(r.step));
    per[r.segment].nrs.push_back(r.nrs);
  }
  auto make = [&](const std::string& tag, const Acc& a, double slope) {
    SummaryRow row{std::string(method), std::string(protocol), tag, seed, 0.0, slope, wall_seconds, a.seen,
                   a.skipped};
    row.accuracy = a.seen > 0 ? static_cast<double>(a.correct) / static_cast<double>(a.seen) : 0.0;
    return row;
  };
  std::vector<SummaryRow> rows;
  double slope_sum = 0.0;
  for (std::size_t s = 0; s < per.size(); ++s) {
    const double slope = ls_slope(per[s].steps, per[s].nrs);
    slope_sum += slope;
    rows.push_back(make(segment_tags[s], per[s], slope));
  }
  if (per.size() > 1) rows.push_back(make("all", total, slope_sum / static_cast<double>(per.size())));
  return rows;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
  std::size_t count = 0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd out;
  out.count = v.size();
  if (v.empty()) return out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return out;
}

// Accuracy mean/std across seeds keyed on (method, protocol, segment).
inline std::map<std::tuple<std::string, std::string, std::string>, MeanStd> accuracy_by_group(
    const std::vector<SummaryRow>& rows) {
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> groups;
  for (const auto& r : rows) groups[{r.method, r.protocol, r.segment}].push_back(r.accuracy);
  std::map<std::tuple<std::string, std::string, std::string>, MeanStd> out;
  for (const auto& [k, v] : groups) out[k] = mean_std(v);
  return out;
}

inline constexpr std::string_view kSummaryHeader =
    "method,protocol,segment,seed,accuracy,accuracy_mean,accuracy_std,nrs_slope,samples,skipped_steps,wall_seconds";

inline void write_summary_csv(std::vector<SummaryRow> rows, std::ostream& out) {
  std::sort(rows.begin(), rows.end(), row_order);
  const auto groups = accuracy_by_group(rows);
  out << kSummaryHeader << '\n' << std::setprecision(10);
  for (const auto& r : rows) {
    const MeanStd& g = groups.at({r.method, r.protocol, r.segment});
    out << r.method << ',' << r.protocol << ',' << r.segment << ',' << r.seed << ',' << r.accuracy << ',' << g.mean
        << ',' << g.std << ',' << r.nrs_slope << ',' << r.samples << ',' << r.skipped_steps << ',' << r.wall_seconds
        << '\n';
  }
}

inline void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  FRET_CHECK(out.good(), ErrorKind::kIoError, "cannot write " + path.string());
  write_summary_csv(rows, out);
}

inline void write_jsonl(const std::vector<AdaptationRecord>& records, std::ostream& out) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline void write_jsonl(const std::vector<AdaptationRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  FRET_CHECK(out.good(), ErrorKind::kIoError, "cannot write " + path.string());
  write_jsonl(records, out);
}

inline std::vector<AdaptationRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  FRET_CHECK(in.good(), ErrorKind::kIoError, "cannot read " + path.string());
  std::vector<AdaptationRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kIoError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// step,raw,normalized from the recorded steps.
inline void write_nrs_csv(const std::vector<AdaptationRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  FRET_CHECK(out.good(), ErrorKind::kIoError, "cannot write " + path.string());
  out << "step,raw,normalized\n" << std::setprecision(17);
  for (const auto& r : records) out << r.step << ',' << r.redundancy.value << ',' << r.nrs << '\n';
}

inline std::string steps_filename(std::string_view method, std::uint64_t seed) {
  return "steps." + std::string(method) + "." + std::to_string(seed) + ".jsonl";
}

inline std::string nrs_filename(std::string_view method, std::uint64_t seed) {
  return "nrs." + std::string(method) + "." + std::to_string(seed) + ".csv";
}

}  // namespace fret
