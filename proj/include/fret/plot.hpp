// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal static line plots rendered to PNG.
#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "fret/error.hpp"

namespace fret::plot {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb& o) const { return r == o.r && g == o.g && b == o.b; }
};

inline constexpr std::array<Rgb, 8> kPalette{{{31, 119, 180},
                                              {214, 39, 40},
                                              {44, 160, 44},
                                              {255, 127, 14},
                                              {148, 103, 189},
                                              {140, 86, 75},
                                              {227, 119, 194},
                                              {23, 190, 207}}};

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Figure {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;

  std::vector<std::string> legend() const {
    std::vector<std::string> out;
    for (const auto& s : series) out.push_back(s.label);
    return out;
  }
};

class Canvas {
 public:
  Canvas(int width, int height, Rgb background = {255, 255, 255})
      : w_(width), h_(height), px_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), background) {}

  int width() const { return w_; }
  int height() const { return h_; }
  Rgb at(int x, int y) const { return px_[static_cast<std::size_t>(y) * static_cast<std::size_t>(w_) + static_cast<std::size_t>(x)]; }
  const std::vector<Rgb>& pixels() const { return px_; }

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    px_[static_cast<std::size_t>(y) * static_cast<std::size_t>(w_) + static_cast<std::size_t>(x)] = c;
  }

  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y) {
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
    }
  }

  void line(double x0, double y0, double x1, double y1, Rgb c, int thickness = 1) {
    const double len = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
    const int steps = std::max(1, static_cast<int>(std::ceil(len)));
    const int lo = -(thickness - 1) / 2;
    const int hi = thickness / 2;
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
      const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
      fill_rect(x + lo, y + lo, x + hi, y + hi, c);
    }
  }

  void text(int x, int y, const std::string& s, Rgb c, int scale = 1);
  static int text_width(const std::string& s, int scale = 1) {
    return s.empty() ? 0 : static_cast<int>(s.size()) * 6 * scale - scale;
  }

 private:
  int w_, h_;
  std::vector<Rgb> px_;
};

namespace detail {

// 5x7 glyphs, one byte per row, most significant of the low five bits on the left.
inline const std::array<std::uint8_t, 7>* glyph(char ch) {
  static const std::unordered_map<char, std::array<std::uint8_t, 7>> font{
      {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
      {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
      {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
      {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
      {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
      {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}},
      {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
      {'/', {0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00}},
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
      {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
      {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
      {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
      {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
      {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
      {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
      {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
      {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
      {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
      {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
      {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
      {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
      {'[', {0x0E, 0x08, 0x08, 0x08, 0x08, 0x08, 0x0E}},
      {']', {0x0E, 0x02, 0x02, 0x02, 0x02, 0x02, 0x0E}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
  };
  if (ch >= 'a' && ch <= 'z') ch = static_cast<char>(ch - 'a' + 'A');
  const auto it = font.find(ch);
  return it == font.end() ? nullptr : &it->second;
}

inline std::string format_tick(double v, double step) {
  char buf[32];
  if (v == 0.0) return "0";
  const double mag = std::abs(v);
  if (mag >= 1e5 || mag < 1e-3) {
    std::snprintf(buf, sizeof buf, "%.2g", v);
  } else {
    const int decimals = std::clamp(static_cast<int>(-std::floor(std::log10(step) + 1e-9)), 0, 6);
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  }
  return buf;
}

}  // namespace detail

inline void Canvas::text(int x, int y, const std::string& s, Rgb c, int scale) {
  int cx = x;
  for (char ch : s) {
    if (const auto* g = detail::glyph(ch)) {
      for (int row = 0; row < 7; ++row) {
        for (int col = 0; col < 5; ++col) {
          if (((*g)[static_cast<std::size_t>(row)] >> (4 - col)) & 1) {
            fill_rect(cx + col * scale, y + row * scale, cx + col * scale + scale - 1, y + row * scale + scale - 1, c);
          }
        }
      }
    }
    cx += 6 * scale;
  }
}

// Round tick positions covering [lo, hi].
inline std::vector<double> nice_ticks(double lo, double hi, int target = 6) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / std::max(1, target);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> out;
  for (double t = std::ceil(lo / step - 1e-9) * step; t <= hi + step * 1e-9; t += step) {
    out.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
  }
  return out;
}

inline Canvas render(const Figure& fig, int width = 720, int height = 450) {
  FRET_CHECK(!fig.series.empty(), ErrorKind::kEmptyRecords, "figure '" + fig.title + "' has no series");
  Canvas cv(width, height);
  const Rgb black{0, 0, 0}, grid{225, 225, 225};
  const int left = 78, right = 20, top = 40, bottom = 56;
  const int pw = width - left - right, ph = height - top - bottom;

  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : fig.series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  FRET_CHECK(std::isfinite(xmin), ErrorKind::kEmptyRecords, "figure '" + fig.title + "' has no finite points");
  if (xmax == xmin) {
    xmin -= 1.0;
    xmax += 1.0;
  }
  if (ymax == ymin) {
    const double pad = std::max(std::abs(ymin) * 0.05, 1e-3);
    ymin -= pad;
    ymax += pad;
  } else {
    const double pad = (ymax - ymin) * 0.05;
    ymin -= pad;
    ymax += pad;
  }
  // Reserve an empty band at the top of the plot for the legend.
  int widest = 0;
  for (const auto& s : fig.series) widest = std::max(widest, Canvas::text_width(s.label));
  const int lw = widest + 30, lh = 6 + 12 * static_cast<int>(fig.series.size());
  const int band = std::min(lh + 12, ph / 2);
  ymax += (ymax - ymin) * band / (ph - band);
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + ph - (y - ymin) / (ymax - ymin) * ph; };

  const auto xt = nice_ticks(xmin, xmax), yt = nice_ticks(ymin, ymax);
  const double xstep = xt.size() > 1 ? xt[1] - xt[0] : 1.0, ystep = yt.size() > 1 ? yt[1] - yt[0] : 1.0;
  for (double t : xt) {
    const int x = static_cast<int>(std::lround(sx(t)));
    cv.line(x, top, x, top + ph, grid);
    const auto label = detail::format_tick(t, xstep);
    cv.text(x - Canvas::text_width(label) / 2, top + ph + 8, label, black);
  }
  for (double t : yt) {
    const int y = static_cast<int>(std::lround(sy(t)));
    cv.line(left, y, left + pw, y, grid);
    const auto label = detail::format_tick(t, ystep);
    cv.text(left - 6 - Canvas::text_width(label), y - 3, label, black);
  }
  cv.line(left, top, left, top + ph, black);
  cv.line(left, top + ph, left + pw, top + ph, black);

  cv.text((width - Canvas::text_width(fig.title, 2)) / 2, 10, fig.title, black, 2);
  cv.text(left + (pw - Canvas::text_width(fig.x_label)) / 2, height - 20, fig.x_label, black);
  cv.text(8, top - 14, fig.y_label, black);

  for (std::size_t k = 0; k < fig.series.size(); ++k) {
    const auto& s = fig.series[k];
    const Rgb c = kPalette[k % kPalette.size()];
    const std::size_t n = std::min(s.x.size(), s.y.size());
    bool have_prev = false;
    double px = 0, py = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        have_prev = false;
        continue;
      }
      const double x = sx(s.x[i]), y = sy(s.y[i]);
      if (have_prev) cv.line(px, py, x, y, c, 2);
      if (n <= 60) {
        const int ix = static_cast<int>(std::lround(x)), iy = static_cast<int>(std::lround(y));
        cv.fill_rect(ix - 2, iy - 2, ix + 2, iy + 2, c);
      }
      px = x;
      py = y;
      have_prev = true;
    }
  }

  const int lx0 = left + pw - 6 - lw, ly0 = top + 6, lx1 = lx0 + lw, ly1 = ly0 + lh;
  cv.fill_rect(lx0, ly0, lx1, ly1, {255, 255, 255});
  cv.line(lx0, ly0, lx1, ly0, black);
  cv.line(lx0, ly1, lx1, ly1, black);
  cv.line(lx0, ly0, lx0, ly1, black);
  cv.line(lx1, ly0, lx1, ly1, black);
  for (std::size_t k = 0; k < fig.series.size(); ++k) {
    const int y = ly0 + 6 + 12 * static_cast<int>(k);
    cv.fill_rect(lx0 + 6, y + 2, lx0 + 20, y + 4, kPalette[k % kPalette.size()]);
    cv.text(lx0 + 25, y, fig.series[k].label, black);
  }
  return cv;
}

inline void write_png(const Canvas& cv, const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  FRET_CHECK(fp != nullptr, ErrorKind::kIoError, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw Error(ErrorKind::kIoError, "libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(cv.width()), static_cast<png_uint_32>(cv.height()), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(cv.width()) * 3);
  for (int y = 0; y < cv.height(); ++y) {
    for (int x = 0; x < cv.width(); ++x) {
      const Rgb c = cv.at(x, y);
      row[static_cast<std::size_t>(x) * 3] = c.r;
      row[static_cast<std::size_t>(x) * 3 + 1] = c.g;
      row[static_cast<std::size_t>(x) * 3 + 2] = c.b;
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline void save(const Figure& fig, const std::filesystem::path& path, int width = 720, int height = 450) {
  write_png(render(fig, width, height), path);
}

// Reads an 8-bit RGB PNG back; used by tests and the plot verb's checks.
inline Canvas read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  FRET_CHECK(png_image_begin_read_from_file(&image, path.string().c_str()) != 0, ErrorKind::kIoError,
             "cannot read png " + path.string());
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  FRET_CHECK(png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr) != 0, ErrorKind::kIoError,
             "cannot decode png " + path.string());
  Canvas cv(static_cast<int>(image.width), static_cast<int>(image.height));
  for (int y = 0; y < cv.height(); ++y) {
    for (int x = 0; x < cv.width(); ++x) {
      const std::size_t o = (static_cast<std::size_t>(y) * image.width + static_cast<std::size_t>(x)) * 3;
      cv.set(x, y, {buf[o], buf[o + 1], buf[o + 2]});
    }
  }
  return cv;
}

}  // namespace fret::plot
