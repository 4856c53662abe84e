#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mrens/error.hpp"
#include "mrens/volume_io.hpp"

namespace mrens {

enum class Normalization { minmax, zscore };

inline Normalization normalization_from_name(const std::string& name) {
  if (name == "minmax") return Normalization::minmax;
  if (name == "zscore") return Normalization::zscore;
  throw Error("preprocess", "BadNormalization", "normalization must be minmax or zscore, got '" + name + "'");
}

inline std::string normalization_name(Normalization n) {
  return n == Normalization::minmax ? "minmax" : "zscore";
}

struct PreprocessConfig {
  std::size_t height = 224;
  std::size_t width = 224;
  Normalization normalization = Normalization::minmax;

  void validate() const {
    if (height < 1 || width < 1) {
      throw Error("preprocess", "BadTarget", "target dimensions must be at least 1x1");
    }
  }
};

// Bilinear resampling with half-pixel centres: output pixel d samples source
// coordinate (d + 0.5) * src/dst - 0.5, clamped to the source grid.
inline Slice resize_bilinear(const Slice& slice, std::size_t target_height, std::size_t target_width) {
  if (target_height < 1 || target_width < 1) {
    throw Error("preprocess", "BadTarget", "target dimensions must be at least 1x1");
  }
  const std::size_t sh = slice.height();
  const std::size_t sw = slice.width();

  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t src, std::size_t dst) {
    std::vector<Tap> t(dst);
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    const double max_coord = static_cast<double>(src - 1);
    for (std::size_t d = 0; d < dst; ++d) {
      const double s = std::clamp((static_cast<double>(d) + 0.5) * scale - 0.5, 0.0, max_coord);
      const auto lo = static_cast<std::size_t>(std::floor(s));
      t[d] = {lo, std::min(lo + 1, src - 1), s - static_cast<double>(lo)};
    }
    return t;
  };
  const auto rows = taps(sh, target_height);
  const auto cols = taps(sw, target_width);

  std::vector<double> out(target_height * target_width);
  for (std::size_t r = 0; r < target_height; ++r) {
    const auto& ry = rows[r];
    for (std::size_t c = 0; c < target_width; ++c) {
      const auto& cx = cols[c];
      const double top = slice.at(ry.lo, cx.lo) + cx.frac * (slice.at(ry.lo, cx.hi) - slice.at(ry.lo, cx.lo));
      const double bot = slice.at(ry.hi, cx.lo) + cx.frac * (slice.at(ry.hi, cx.hi) - slice.at(ry.hi, cx.lo));
      out[r * target_width + c] = top + ry.frac * (bot - top);
    }
  }
  return Slice(target_height, target_width, std::move(out), slice.index(), slice.scan_id());
}

// Per-slice normalisation. Constant slices map to all zeros in both modes.
inline Slice normalize(const Slice& slice, Normalization mode) {
  const auto& px = slice.pixels();
  std::vector<double> out(px.size(), 0.0);
  if (!px.empty()) {
    if (mode == Normalization::minmax) {
      const auto [lo, hi] = std::ranges::minmax_element(px);
      const double range = *hi - *lo;
      if (range > 0.0) {
        for (std::size_t i = 0; i < px.size(); ++i) out[i] = (px[i] - *lo) / range;
      }
    } else {
      const double n = static_cast<double>(px.size());
      double mean = 0.0;
      for (double v : px) mean += v;
      mean /= n;
      double var = 0.0;
      for (double v : px) var += (v - mean) * (v - mean);
      const double sd = std::sqrt(var / n);
      if (sd > 0.0) {
        for (std::size_t i = 0; i < px.size(); ++i) out[i] = (px[i] - mean) / sd;
      }
    }
  }
  return Slice(slice.height(), slice.width(), std::move(out), slice.index(), slice.scan_id());
}

inline Slice preprocess_slice(const Slice& slice, const PreprocessConfig& config) {
  config.validate();
  return normalize(resize_bilinear(slice, config.height, config.width), config.normalization);
}

// Row-major feature vector of length height * width.
inline std::vector<double> flatten_features(const Slice& slice) { return slice.pixels(); }

inline Slice unflatten_features(std::span<const double> features, std::size_t height, std::size_t width,
                                std::size_t index = 0, std::string scan_id = {}) {
  if (features.size() != height * width) {
    throw Error("preprocess", "DimensionMismatch", "feature length does not match height*width");
  }
  return Slice(height, width, std::vector<double>(features.begin(), features.end()), index, std::move(scan_id));
}

}  // namespace mrens
