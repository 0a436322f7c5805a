// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
//
// Declarative experiment configuration read from TOML.
#pragma once

#include "toml.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fret/data.hpp"
#include "fret/engine.hpp"

namespace fret {

struct SyntheticSource {
  std::size_t per_class = 100;
  std::uint64_t seed = 1234;
  std::size_t size = 16;
};

struct ExperimentConfig {
  // Exactly one of `dataset` (directory-of-arrays) and `synthetic` is set.
  std::optional<std::filesystem::path> dataset;
  std::optional<SyntheticSource> synthetic;
  std::filesystem::path checkpoint;
  std::string cut = "fc";

  std::vector<std::string> methods{"source", "sfret", "gfret"};
  AdaptationConfig adaptation;
  std::map<std::string, double> lr_by_method;

  std::vector<CorruptionSpec> corruptions{{CorruptionKind::kGaussianNoise, 5}};
  std::optional<LongTailSpec> longtail;
  SeverityPreset preset = SeverityPreset::kSmallImage;
  std::optional<std::filesystem::path> precorrupted_root;

  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out_dir = "runs/default";

  std::vector<CorruptionKind> sweep_kinds{CorruptionKind::kGaussianNoise};
  std::vector<int> sweep_severities{1, 2, 3, 4, 5};

  // Learning rate used for `method`, honoring per-method overrides.
  double lr_for(const std::string& method) const {
    const auto it = lr_by_method.find(method);
    return it == lr_by_method.end() ? adaptation.lr : it->second;
  }

  AdaptationConfig adaptation_for(const std::string& method, std::uint64_t seed) const {
    AdaptationConfig cfg = adaptation;
    cfg.method = parse_method(method);
    cfg.lr = lr_for(method);
    cfg.seed = seed;
    return cfg;
  }

  void validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::kConfigError, msg); };
    if (dataset.has_value() == synthetic.has_value()) fail("set exactly one of data.path and data.synthetic");
    if (dataset && !std::filesystem::is_directory(*dataset)) fail("dataset directory not found: " + dataset->string());
    if (synthetic && (synthetic->per_class == 0 || synthetic->size < 8)) fail("data.synthetic needs per_class >= 1, size >= 8");
    if (!std::filesystem::is_regular_file(checkpoint)) fail("checkpoint not found: " + checkpoint.string());
    if (precorrupted_root && !std::filesystem::is_directory(*precorrupted_root)) {
      fail("precorrupted_root not found: " + precorrupted_root->string());
    }
    if (seeds.empty()) fail("at least one seed is required");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) fail("duplicate seeds");
    if (methods.empty()) fail("at least one method is required");
    if (corruptions.empty()) fail("at least one corruption segment is required");
    for (const auto& m : methods) {
      AdaptationConfig cfg = adaptation_for(m, 0);
      try {
        cfg.validate();
      } catch (const Error& e) {
        fail(m + ": " + e.what());
      }
    }
    for (const auto& [m, lr] : lr_by_method) {
      parse_method(m);
      if (!(lr >= 0.0)) fail("lr_by_method." + m + " must be nonnegative");
    }
    for (const auto& c : corruptions) {
      if (c.severity < 1 || c.severity > 5) fail("corruption severity out of range in " + c.tag());
      if (!natively_supported(c.kind) && !precorrupted_root) {
        fail(std::string(to_string(c.kind)) + " needs data.precorrupted_root");
      }
    }
    if (longtail) {
      try {
        longtail->validate();
      } catch (const Error& e) {
        fail(std::string("data.longtail: ") + e.what());
      }
    }
    for (int s : sweep_severities) {
      if (s < 1 || s > 5) fail("sweep severities must lie in [1, 5]");
    }
  }
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& msg) { throw Error(ErrorKind::kConfigError, msg); }

inline void reject_unknown(const toml::table& t, const std::string& where, std::initializer_list<std::string_view> keys) {
  for (const auto& [k, v] : t) {
    if (std::find(keys.begin(), keys.end(), k.str()) == keys.end()) {
      config_error("unknown key '" + std::string(k.str()) + "' in [" + where + "]");
    }
  }
}

template <typename T>
std::optional<T> get(const toml::table& t, std::string_view key, const std::string& where) {
  const toml::node* n = t.get(key);
  if (!n) return std::nullopt;
  if constexpr (std::is_same_v<T, double>) {
    if (auto v = n->value<double>()) return *v;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (n->is_boolean()) return n->value<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (n->is_integer()) {
      const auto v = *n->value<std::int64_t>();
      if (v < 0 && std::is_unsigned_v<T>) config_error(where + "." + std::string(key) + " must be nonnegative");
      return static_cast<T>(v);
    }
  } else {
    if (auto v = n->value<T>()) return *v;
  }
  config_error(where + "." + std::string(key) + " has the wrong type");
}

inline const toml::table* subtable(const toml::table& t, std::string_view key) {
  const toml::node* n = t.get(key);
  if (!n) return nullptr;
  if (!n->is_table()) config_error("'" + std::string(key) + "' must be a table");
  return n->as_table();
}

inline std::vector<std::string> string_list(const toml::table& t, std::string_view key, const std::string& where) {
  std::vector<std::string> out;
  const toml::node* n = t.get(key);
  if (!n) return out;
  const toml::array* a = n->as_array();
  if (!a) config_error(where + "." + std::string(key) + " must be an array of strings");
  for (const auto& e : *a) {
    auto s = e.value<std::string>();
    if (!s) config_error(where + "." + std::string(key) + " must contain strings");
    out.push_back(*s);
  }
  return out;
}

inline std::vector<std::int64_t> int_list(const toml::table& t, std::string_view key, const std::string& where) {
  std::vector<std::int64_t> out;
  const toml::node* n = t.get(key);
  if (!n) return out;
  const toml::array* a = n->as_array();
  if (!a) config_error(where + "." + std::string(key) + " must be an array of integers");
  for (const auto& e : *a) {
    if (!e.is_integer()) config_error(where + "." + std::string(key) + " must contain integers");
    out.push_back(*e.value<std::int64_t>());
  }
  return out;
}

}  // namespace detail

// "kind:severity", e.g. "gaussian_noise:5".
inline CorruptionSpec parse_corruption_spec(std::string_view s) {
  const auto colon = s.find(':');
  if (colon == std::string_view::npos) detail::config_error("corruption '" + std::string(s) + "' must be kind:severity");
  CorruptionSpec spec{parse_corruption(s.substr(0, colon)), 0};
  try {
    spec.severity = std::stoi(std::string(s.substr(colon + 1)));
  } catch (const std::exception&) {
    detail::config_error("bad severity in '" + std::string(s) + "'");
  }
  if (spec.severity < 1 || spec.severity > 5) detail::config_error("severity out of range in '" + std::string(s) + "'");
  return spec;
}

inline SeverityPreset parse_preset(std::string_view s) {
  if (s == "small_image") return SeverityPreset::kSmallImage;
  if (s == "full_size") return SeverityPreset::kFullSize;
  detail::config_error("unknown severity preset '" + std::string(s) + "'");
}

// Relative paths resolve against `base_dir`.
inline ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir,
                                     const std::string& source_name = "config") {
  toml::table root;
  try {
    root = toml::parse(text, source_name);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source_name << ":" << e.source().begin.line << ": " << e.description();
    detail::config_error(msg.str());
  }
  using detail::get;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : (base_dir / path).lexically_normal();
  };
  detail::reject_unknown(root, "root", {"model", "data", "adaptation", "experiment", "sweep"});

  ExperimentConfig cfg;
  if (const auto* m = detail::subtable(root, "model")) {
    detail::reject_unknown(*m, "model", {"checkpoint", "cut"});
    if (auto v = get<std::string>(*m, "checkpoint", "model")) cfg.checkpoint = resolve(*v);
    if (auto v = get<std::string>(*m, "cut", "model")) cfg.cut = *v;
  }
  if (const auto* d = detail::subtable(root, "data")) {
    detail::reject_unknown(*d, "data", {"path", "synthetic", "corruptions", "batch_size", "severity_preset",
                                        "precorrupted_root", "longtail"});
    if (auto v = get<std::string>(*d, "path", "data")) cfg.dataset = resolve(*v);
    if (const auto* s = detail::subtable(*d, "synthetic")) {
      detail::reject_unknown(*s, "data.synthetic", {"per_class", "seed", "size"});
      SyntheticSource src;
      if (auto v = get<std::size_t>(*s, "per_class", "data.synthetic")) src.per_class = *v;
      if (auto v = get<std::uint64_t>(*s, "seed", "data.synthetic")) src.seed = *v;
      if (auto v = get<std::size_t>(*s, "size", "data.synthetic")) src.size = *v;
      cfg.synthetic = src;
    }
    if (d->contains("corruptions")) {
      cfg.corruptions.clear();
      for (const auto& s : detail::string_list(*d, "corruptions", "data")) cfg.corruptions.push_back(parse_corruption_spec(s));
    }
    if (auto v = get<std::size_t>(*d, "batch_size", "data")) cfg.adaptation.batch_size = *v;
    if (auto v = get<std::string>(*d, "severity_preset", "data")) cfg.preset = parse_preset(*v);
    if (auto v = get<std::string>(*d, "precorrupted_root", "data")) cfg.precorrupted_root = resolve(*v);
    if (const auto* lt = detail::subtable(*d, "longtail")) {
      detail::reject_unknown(*lt, "data.longtail", {"imbalance_factor", "profile", "n_max"});
      LongTailSpec spec;
      if (auto v = get<double>(*lt, "imbalance_factor", "data.longtail")) spec.imbalance_factor = *v;
      if (auto v = get<std::string>(*lt, "profile", "data.longtail")) spec.profile = *v;
      if (auto v = get<std::size_t>(*lt, "n_max", "data.longtail")) spec.n_max = *v;
      cfg.longtail = spec;
    }
  }
  if (const auto* a = detail::subtable(root, "adaptation")) {
    detail::reject_unknown(*a, "adaptation",
                           {"methods", "lr", "lambda", "k1", "k2", "param_policy", "protocol", "optimizer", "momentum",
                            "use_batch_stats", "head_bias_in_projection", "detach_graph", "use_filters",
                            "lr_by_method"});
    AdaptationConfig& ad = cfg.adaptation;
    if (a->contains("methods")) cfg.methods = detail::string_list(*a, "methods", "adaptation");
    for (const auto& m : cfg.methods) parse_method(m);
    if (auto v = get<double>(*a, "lr", "adaptation")) ad.lr = *v;
    if (auto v = get<double>(*a, "lambda", "adaptation")) ad.lambda = *v;
    if (auto v = get<long>(*a, "k1", "adaptation")) ad.k1 = *v;
    if (auto v = get<double>(*a, "k2", "adaptation")) ad.k2 = *v;
    if (auto v = get<std::string>(*a, "param_policy", "adaptation")) ad.param_policy.mode = parse_param_mode(*v);
    if (auto v = get<std::string>(*a, "protocol", "adaptation")) ad.protocol = parse_protocol(*v);
    if (auto v = get<std::string>(*a, "optimizer", "adaptation")) ad.optimizer = parse_optimizer(*v);
    if (auto v = get<double>(*a, "momentum", "adaptation")) ad.momentum = *v;
    if (auto v = get<bool>(*a, "use_batch_stats", "adaptation")) ad.use_batch_stats = *v;
    if (auto v = get<bool>(*a, "head_bias_in_projection", "adaptation")) ad.head_bias_in_projection = *v;
    if (auto v = get<bool>(*a, "detach_graph", "adaptation")) ad.detach_graph = *v;
    if (auto v = get<bool>(*a, "use_filters", "adaptation")) ad.use_filters = *v;
    if (const auto* lrs = detail::subtable(*a, "lr_by_method")) {
      for (const auto& [k, v] : *lrs) {
        parse_method(k.str());
        auto lr = v.value<double>();
        if (!lr) detail::config_error("adaptation.lr_by_method." + std::string(k.str()) + " must be a number");
        cfg.lr_by_method[std::string(k.str())] = *lr;
      }
    }
  }
  if (const auto* e = detail::subtable(root, "experiment")) {
    detail::reject_unknown(*e, "experiment", {"seeds", "out"});
    if (e->contains("seeds")) {
      cfg.seeds.clear();
      for (auto s : detail::int_list(*e, "seeds", "experiment")) {
        if (s < 0) detail::config_error("seeds must be nonnegative");
        cfg.seeds.push_back(static_cast<std::uint64_t>(s));
      }
    }
    if (auto v = get<std::string>(*e, "out", "experiment")) cfg.out_dir = resolve(*v);
  }
  if (const auto* s = detail::subtable(root, "sweep")) {
    detail::reject_unknown(*s, "sweep", {"kinds", "severities"});
    if (s->contains("kinds")) {
      cfg.sweep_kinds.clear();
      for (const auto& k : detail::string_list(*s, "kinds", "sweep")) cfg.sweep_kinds.push_back(parse_corruption(k));
    }
    if (s->contains("severities")) {
      cfg.sweep_severities.clear();
      for (auto v : detail::int_list(*s, "severities", "sweep")) cfg.sweep_severities.push_back(static_cast<int>(v));
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in.good()) detail::config_error("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path(), path.string());
}

// Command-line overrides; unset fields leave the file's values.
struct ConfigOverrides {
  std::optional<std::string> method;
  std::vector<std::uint64_t> seeds;
  std::optional<double> lr;
  std::optional<double> lambda;
  std::optional<long> k1;
  std::optional<double> k2;
  std::optional<std::string> protocol;
  std::optional<std::filesystem::path> out_dir;
};

inline void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& o) {
  if (o.method) {
    cfg.methods.clear();
    std::stringstream ss(*o.method);
    std::string item;
    while (std::getline(ss, item, ',')) {
      parse_method(item);
      cfg.methods.push_back(item);
    }
  }
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  if (o.lr) {
    cfg.adaptation.lr = *o.lr;
    cfg.lr_by_method.clear();
  }
  if (o.lambda) cfg.adaptation.lambda = *o.lambda;
  if (o.k1) cfg.adaptation.k1 = *o.k1;
  if (o.k2) cfg.adaptation.k2 = *o.k2;
  if (o.protocol) cfg.adaptation.protocol = parse_protocol(*o.protocol);
  if (o.out_dir) cfg.out_dir = *o.out_dir;
}

}  // namespace fret
