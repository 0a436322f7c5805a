// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
//
// Labeled image sets, the on-disk directory-of-arrays format, parametric
// corruptions, long-tailed subsampling and test-stream assembly.
#pragma once

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fret/image.hpp"

namespace fret {

// splitmix64 finalizer; derives independent sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct Dataset {
  ImageBatch images;
  std::vector<std::int64_t> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return labels.size(); }
  std::size_t num_classes() const { return class_names.size(); }

  void validate() const {
    images.validate();
    FRET_CHECK(images.n == labels.size(), ErrorKind::kShapeMismatch, "dataset: image/label count mismatch");
    for (auto y : labels) {
      FRET_CHECK(y >= 0 && static_cast<std::size_t>(y) < class_names.size(), ErrorKind::kShapeMismatch,
                 "dataset: label out of range");
    }
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(num_classes(), 0);
    for (auto y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
  }

  Dataset subset(const std::vector<std::size_t>& indices) const {
    Dataset out{gather(images, indices), {}, class_names};
    out.labels.reserve(indices.size());
    for (auto i : indices) out.labels.push_back(labels[i]);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Directory-of-arrays format:
//   manifest.json  {"format": "fret-dataset", "version": 1, "num_samples",
//                   "height", "width", "channels", "class_names",
//                   "images": "images.f32", "labels": "labels.i64"}
//   images.f32     n*H*W*C little-endian float32, NHWC
//   labels.i64     n little-endian int64

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = {{"format", "fret-dataset"},
                             {"version", 1},
                             {"num_samples", ds.size()},
                             {"height", ds.images.height},
                             {"width", ds.images.width},
                             {"channels", ds.images.channels},
                             {"class_names", ds.class_names},
                             {"images", "images.f32"},
                             {"labels", "labels.i64"}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  std::ofstream img(dir / "images.f32", std::ios::binary);
  img.write(reinterpret_cast<const char*>(ds.images.pixels.data()),
            static_cast<std::streamsize>(ds.images.pixels.size() * sizeof(float)));
  std::ofstream lab(dir / "labels.i64", std::ios::binary);
  lab.write(reinterpret_cast<const char*>(ds.labels.data()),
            static_cast<std::streamsize>(ds.labels.size() * sizeof(std::int64_t)));
  FRET_CHECK(img.good() && lab.good(), ErrorKind::kIoError, "failed writing dataset to " + dir.string());
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  FRET_CHECK(mf.good(), ErrorKind::kIoError, "missing manifest.json in " + dir.string());
  nlohmann::json m;
  try {
    mf >> m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kIoError, (dir / "manifest.json").string() + ": " + e.what());
  }
  FRET_CHECK(m.value("format", "") == "fret-dataset", ErrorKind::kIoError, "not a fret dataset: " + dir.string());
  Dataset ds;
  const auto n = m.at("num_samples").get<std::size_t>();
  ds.images = ImageBatch::zeros(n, m.at("height").get<std::size_t>(), m.at("width").get<std::size_t>(),
                                m.at("channels").get<std::size_t>());
  ds.labels.resize(n);
  ds.class_names = m.at("class_names").get<std::vector<std::string>>();
  const auto images_path = dir / m.value("images", std::string("images.f32"));
  const auto labels_path = dir / m.value("labels", std::string("labels.i64"));
  FRET_CHECK(std::filesystem::file_size(images_path) == ds.images.pixels.size() * sizeof(float),
             ErrorKind::kIoError, "image array size does not match manifest");
  FRET_CHECK(std::filesystem::file_size(labels_path) == n * sizeof(std::int64_t), ErrorKind::kIoError,
             "label array size does not match manifest");
  std::ifstream img(images_path, std::ios::binary);
  img.read(reinterpret_cast<char*>(ds.images.pixels.data()),
           static_cast<std::streamsize>(ds.images.pixels.size() * sizeof(float)));
  std::ifstream lab(labels_path, std::ios::binary);
  lab.read(reinterpret_cast<char*>(ds.labels.data()), static_cast<std::streamsize>(n * sizeof(std::int64_t)));
  FRET_CHECK(img.good() && lab.good(), ErrorKind::kIoError, "failed reading dataset from " + dir.string());
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic 10-class image set: one geometric motif per class drawn with a
// random low-contrast color over a shaded background.

inline const std::vector<std::string>& shapes10_class_names() {
  static const std::vector<std::string> names{"hbar",   "vbar", "diag", "antidiag", "ring",
                                              "square", "plus", "cross", "disk",    "equals"};
  return names;
}

inline bool shapes10_mask(int cls, double dx, double dy, double r) {
  const double ax = std::abs(dx);
  const double ay = std::abs(dy);
  const double dist = std::sqrt(dx * dx + dy * dy);
  switch (cls) {
    case 0: return ay <= 1.2 && ax <= r;
    case 1: return ax <= 1.2 && ay <= r;
    case 2: return std::abs(dx - dy) <= 1.3 && ax <= r * 0.8 && ay <= r * 0.8;
    case 3: return std::abs(dx + dy) <= 1.3 && ax <= r * 0.8 && ay <= r * 0.8;
    case 4: return std::abs(dist - r * 0.85) <= 1.0;
    case 5: { const double m = std::max(ax, ay); return m <= r * 0.85 && m >= r * 0.85 - 1.3; }
    case 6: return (ax <= 1.0 && ay <= r) || (ay <= 1.0 && ax <= r);
    case 7: return (std::abs(dx - dy) <= 1.1 || std::abs(dx + dy) <= 1.1) && ax <= r * 0.8 && ay <= r * 0.8;
    case 8: return dist <= r * 0.75;
    case 9: return (std::abs(dy - 2.2) <= 0.9 || std::abs(dy + 2.2) <= 0.9) && ax <= r;
    default: return false;
  }
}

inline Dataset make_shapes10(std::size_t per_class, std::uint64_t seed, std::size_t size = 16) {
  constexpr int kClasses = 10;
  Dataset ds{ImageBatch::zeros(per_class * kClasses, size, size, 3), {}, shapes10_class_names()};
  ds.labels.resize(per_class * kClasses);
  std::mt19937_64 rng(mix_seed(seed, 0x5AA9E5));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> grain(0.0, 0.01);
  const double mid = static_cast<double>(size) / 2.0 - 0.5;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int cls = static_cast<int>(i % kClasses);
    ds.labels[i] = cls;
    std::array<double, 3> bg{}, fg{};
    const double contrast = 0.2 + 0.25 * unit(rng);
    for (int c = 0; c < 3; ++c) {
      bg[c] = 0.25 + 0.5 * unit(rng);
      fg[c] = std::clamp(bg[c] + (unit(rng) < 0.5 ? -contrast : contrast), 0.0, 1.0);
    }
    const double angle = 2.0 * M_PI * unit(rng);
    const double slope = 0.1 * unit(rng) / static_cast<double>(size);
    const double cx = mid + (unit(rng) * 4.0 - 2.0);
    const double cy = mid + (unit(rng) * 4.0 - 2.0);
    const double r = static_cast<double>(size) * (0.25 + 0.12 * unit(rng));
    float* px = ds.images.image(i);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double dx = static_cast<double>(x) - cx;
        const double dy = static_cast<double>(y) - cy;
        const double shade = slope * (std::cos(angle) * dx + std::sin(angle) * dy);
        const bool on = shapes10_mask(cls, dx, dy, r);
        for (int c = 0; c < 3; ++c) {
          const double v = (on ? fg[c] : bg[c]) + shade + grain(rng);
          px[(y * size + x) * 3 + static_cast<std::size_t>(c)] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Corruptions

enum class CorruptionKind {
  kGaussianNoise, kShotNoise, kImpulseNoise, kDefocusBlur, kGlassBlur, kMotionBlur, kZoomBlur, kSnow,
  kFrost, kFog, kBrightness, kContrast, kElastic, kPixelate, kJpeg,
};

inline constexpr std::array<std::string_view, 15> kCorruptionNames{
    "gaussian_noise", "shot_noise", "impulse_noise", "defocus_blur", "glass_blur", "motion_blur", "zoom_blur",
    "snow",           "frost",      "fog",           "brightness",   "contrast",   "elastic",     "pixelate",
    "jpeg"};

inline std::string_view to_string(CorruptionKind k) { return kCorruptionNames[static_cast<std::size_t>(k)]; }

inline CorruptionKind parse_corruption(std::string_view s) {
  for (std::size_t i = 0; i < kCorruptionNames.size(); ++i) {
    if (kCorruptionNames[i] == s) return static_cast<CorruptionKind>(i);
  }
  throw Error(ErrorKind::kConfigError, "unknown corruption '" + std::string(s) + "'");
}

// Severity tables of the published small-image (32px) and full-size
// corruption benchmarks.
enum class SeverityPreset { kSmallImage, kFullSize };

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kGaussianNoise;
  int severity = 1;

  void validate() const {
    FRET_CHECK(severity >= 1 && severity <= 5, ErrorKind::kInvalidArgument,
               "corruption severity must be in [1, 5], got " + std::to_string(severity));
  }
  std::string tag() const { return std::string(to_string(kind)) + "-" + std::to_string(severity); }
};

inline bool natively_supported(CorruptionKind k) {
  return k == CorruptionKind::kGaussianNoise || k == CorruptionKind::kShotNoise ||
         k == CorruptionKind::kImpulseNoise || k == CorruptionKind::kBrightness || k == CorruptionKind::kContrast;
}

inline double corruption_parameter(const CorruptionSpec& spec, SeverityPreset preset = SeverityPreset::kSmallImage) {
  spec.validate();
  using Table = std::array<double, 5>;
  const bool small = preset == SeverityPreset::kSmallImage;
  Table t{};
  switch (spec.kind) {
    case CorruptionKind::kGaussianNoise:
      t = small ? Table{0.04, 0.06, 0.08, 0.09, 0.10} : Table{0.08, 0.12, 0.18, 0.26, 0.38};
      break;
    case CorruptionKind::kShotNoise:
      t = small ? Table{500, 250, 100, 75, 50} : Table{60, 25, 12, 5, 3};
      break;
    case CorruptionKind::kImpulseNoise:
      t = small ? Table{0.01, 0.02, 0.03, 0.05, 0.07} : Table{0.03, 0.06, 0.09, 0.17, 0.27};
      break;
    case CorruptionKind::kBrightness:
      t = small ? Table{0.05, 0.1, 0.15, 0.2, 0.3} : Table{0.1, 0.2, 0.3, 0.4, 0.5};
      break;
    case CorruptionKind::kContrast:
      t = small ? Table{0.75, 0.5, 0.4, 0.3, 0.15} : Table{0.4, 0.3, 0.2, 0.1, 0.05};
      break;
    default:
      throw Error(ErrorKind::kUnsupportedCorruption,
                  std::string(to_string(spec.kind)) + " is not implemented natively; supply a pre-corrupted set");
  }
  return t[static_cast<std::size_t>(spec.severity - 1)];
}

namespace detail {

inline void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  v = mx;
  s = mx > 0.0 ? delta / mx : 0.0;
  if (delta <= 0.0) {
    h = 0.0;
  } else if (mx == r) {
    h = std::fmod((g - b) / delta, 6.0);
  } else if (mx == g) {
    h = (b - r) / delta + 2.0;
  } else {
    h = (r - g) / delta + 4.0;
  }
  h /= 6.0;
  if (h < 0.0) h += 1.0;
}

inline void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double hh = h * 6.0;
  const int sector = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

inline float clip01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace detail

// Applies `spec` to every image. Output is clipped to [0, 1] and depends only
// on the inputs and `seed`.
inline ImageBatch corrupt(const ImageBatch& images, const CorruptionSpec& spec, std::uint64_t seed,
                          SeverityPreset preset = SeverityPreset::kSmallImage) {
  images.validate();
  const double c = corruption_parameter(spec, preset);
  ImageBatch out = images;
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(spec.kind) * 16 + static_cast<std::uint64_t>(spec.severity)));
  auto& px = out.pixels;
  switch (spec.kind) {
    case CorruptionKind::kGaussianNoise: {
      std::normal_distribution<double> noise(0.0, c);
      for (auto& v : px) v = detail::clip01(v + noise(rng));
      break;
    }
    case CorruptionKind::kShotNoise: {
      for (auto& v : px) {
        std::poisson_distribution<long> shot(std::max(0.0, static_cast<double>(v)) * c);
        v = detail::clip01(static_cast<double>(shot(rng)) / c);
      }
      break;
    }
    case CorruptionKind::kImpulseNoise: {
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (auto& v : px) {
        if (unit(rng) < c) v = unit(rng) < 0.5 ? 0.0f : 1.0f;
      }
      break;
    }
    case CorruptionKind::kBrightness: {
      const std::size_t pixels = out.n * out.height * out.width;
      if (out.channels == 3) {
        for (std::size_t p = 0; p < pixels; ++p) {
          float* rgb = px.data() + p * 3;
          double h = 0, s = 0, val = 0, r = 0, g = 0, b = 0;
          detail::rgb_to_hsv(rgb[0], rgb[1], rgb[2], h, s, val);
          detail::hsv_to_rgb(h, s, std::clamp(val + c, 0.0, 1.0), r, g, b);
          rgb[0] = detail::clip01(r);
          rgb[1] = detail::clip01(g);
          rgb[2] = detail::clip01(b);
        }
      } else {
        for (auto& v : px) v = detail::clip01(v + c);
      }
      break;
    }
    case CorruptionKind::kContrast: {
      const std::size_t sz = out.image_size();
      const std::size_t ch = out.channels;
      for (std::size_t i = 0; i < out.n; ++i) {
        float* img = out.image(i);
        std::vector<double> mean(ch, 0.0);
        for (std::size_t k = 0; k < sz; ++k) mean[k % ch] += img[k];
        for (auto& m : mean) m /= static_cast<double>(sz / ch);
        for (std::size_t k = 0; k < sz; ++k) img[k] = detail::clip01((img[k] - mean[k % ch]) * c + mean[k % ch]);
      }
      break;
    }
    default:
      throw Error(ErrorKind::kUnsupportedCorruption, std::string(to_string(spec.kind)));
  }
  return out;
}

// Pre-corrupted archives live at <root>/<kind>/<severity>/ in dataset layout.
inline Dataset load_precorrupted(const std::filesystem::path& root, const CorruptionSpec& spec) {
  spec.validate();
  return load_dataset(root / std::string(to_string(spec.kind)) / std::to_string(spec.severity));
}

// ---------------------------------------------------------------------------
// Long-tailed label shift

struct LongTailSpec {
  double imbalance_factor = 1.0;
  std::string profile = "exponential";
  // Samples kept for the most frequent class; defaults to the smallest class
  // count available.
  std::optional<std::size_t> n_max;

  void validate() const {
    FRET_CHECK(imbalance_factor >= 1.0, ErrorKind::kInvalidArgument, "imbalance factor must be >= 1");
    FRET_CHECK(profile == "exponential", ErrorKind::kInvalidArgument, "unsupported long-tail profile " + profile);
  }
};

// round(n_max * IF^(-k/(C-1))) for class rank k.
inline std::vector<std::size_t> longtail_counts(std::size_t num_classes, std::size_t n_max, double imbalance) {
  std::vector<std::size_t> out(num_classes, n_max);
  if (num_classes < 2) return out;
  for (std::size_t k = 0; k < num_classes; ++k) {
    const double e = -static_cast<double>(k) / static_cast<double>(num_classes - 1);
    out[k] = static_cast<std::size_t>(std::llround(static_cast<double>(n_max) * std::pow(imbalance, e)));
  }
  return out;
}

inline Dataset longtail_subsample(const Dataset& ds, const LongTailSpec& spec, std::uint64_t seed) {
  spec.validate();
  ds.validate();
  const auto available = ds.class_counts();
  FRET_CHECK(!available.empty(), ErrorKind::kInsufficientSamples, "dataset has no classes");
  const std::size_t n_max = spec.n_max.value_or(*std::min_element(available.begin(), available.end()));
  const auto targets = longtail_counts(ds.num_classes(), n_max, spec.imbalance_factor);
  std::vector<std::vector<std::size_t>> members(ds.num_classes());
  for (std::size_t i = 0; i < ds.size(); ++i) members[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  std::mt19937_64 rng(mix_seed(seed, 0x10A6));
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < members.size(); ++k) {
    FRET_CHECK(members[k].size() >= targets[k], ErrorKind::kInsufficientSamples,
               "class " + std::to_string(k) + " has " + std::to_string(members[k].size()) + " samples, needs " +
                   std::to_string(targets[k]));
    std::shuffle(members[k].begin(), members[k].end(), rng);
    keep.insert(keep.end(), members[k].begin(), members[k].begin() + static_cast<std::ptrdiff_t>(targets[k]));
  }
  std::sort(keep.begin(), keep.end());
  return ds.subset(keep);
}

// ---------------------------------------------------------------------------
// Test streams

struct StreamBatch {
  ImageBatch images;
  std::vector<std::int64_t> labels;  // evaluation only
  std::size_t segment = 0;
};

struct Stream {
  std::vector<StreamBatch> batches;
  std::vector<std::string> segment_tags;
};

struct StreamOptions {
  std::size_t batch_size = 128;
  std::optional<LongTailSpec> longtail;
  std::uint64_t seed = 0;
  SeverityPreset preset = SeverityPreset::kSmallImage;
  // Root of pre-corrupted archives for kinds without a native implementation.
  std::optional<std::filesystem::path> precorrupted_root;
};

// One segment per corruption spec, in order; each segment is the (optionally
// long-tailed) base set, corrupted and shuffled under the seed, cut into
// fixed-size batches with a possibly short last batch.
inline Stream build_stream(const Dataset& base, const std::vector<CorruptionSpec>& specs, const StreamOptions& opts) {
  FRET_CHECK(opts.batch_size >= 1, ErrorKind::kInvalidArgument, "batch size must be positive");
  Stream stream;
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const CorruptionSpec& spec = specs[s];
    spec.validate();
    const std::uint64_t seg_seed = mix_seed(opts.seed, s);
    Dataset segment;
    if (natively_supported(spec.kind)) {
      segment = base;
    } else {
      FRET_CHECK(opts.precorrupted_root.has_value(), ErrorKind::kUnsupportedCorruption,
                 std::string(to_string(spec.kind)) + " requires a pre-corrupted dataset root");
      segment = load_precorrupted(*opts.precorrupted_root, spec);
    }
    if (opts.longtail) segment = longtail_subsample(segment, *opts.longtail, seg_seed);
    if (natively_supported(spec.kind)) segment.images = corrupt(segment.images, spec, seg_seed, opts.preset);

    std::vector<std::size_t> order(segment.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(seg_seed, 0x5F1E));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      StreamBatch b{gather(segment.images, idx), {}, s};
      b.labels.reserve(idx.size());
      for (auto i : idx) b.labels.push_back(segment.labels[i]);
      stream.batches.push_back(std::move(b));
    }
    stream.segment_tags.push_back(spec.tag());
  }
  return stream;
}

}  // namespace fret
