#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"

namespace wspd {

struct FeatureVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  bool finite() const {
    for (double v : values) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline constexpr std::size_t kGrayGrid = 8;
inline constexpr std::size_t kOrientationBins = 8;
inline constexpr std::size_t kGradientCells = 2;
inline constexpr std::size_t kBuiltinFeatureDim =
    kGrayGrid * kGrayGrid + kOrientationBins * kGradientCells * kGradientCells;

namespace detail {

// Overlap of pixel [i, i+1) with output cell `cell` when `extent` input pixels
// are averaged into `cells` equal intervals.
inline double cell_overlap(std::size_t i, std::size_t cell, double extent, std::size_t cells) {
  const double lo = cell * extent / static_cast<double>(cells);
  const double hi = (cell + 1) * extent / static_cast<double>(cells);
  return std::max(0.0, std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i)));
}

}  // namespace detail

// Deterministic 96-dimensional crop descriptor:
//   [0, 64)  mean intensity (scaled to [0,1]) on an 8x8 grid, area-averaged;
//   [64, 96) magnitude-weighted histogram of unsigned gradient orientation,
//            8 bins over [0, pi), for each cell of a 2x2 grid (cell-major,
//            row-major cells).
// The concatenation is L2-normalized unless it is identically zero.
inline FeatureVector builtin_features(const GrayImage& patch) {
  if (patch.empty()) throw EmptyPatch("cannot describe an empty patch");
  const auto W = static_cast<std::size_t>(patch.width);
  const auto H = static_cast<std::size_t>(patch.height);
  FeatureVector f;
  f.values.assign(kBuiltinFeatureDim, 0.0);
  auto px = [&](long x, long y) {
    x = std::clamp<long>(x, 0, static_cast<long>(W) - 1);
    y = std::clamp<long>(y, 0, static_cast<long>(H) - 1);
    return patch.at(static_cast<int>(x), static_cast<int>(y)) / 255.0;
  };

  // Area-averaged 8x8 grid, separable weights.
  std::vector<double> wx(W * kGrayGrid), wy(H * kGrayGrid);
  for (std::size_t i = 0; i < W; ++i)
    for (std::size_t c = 0; c < kGrayGrid; ++c)
      wx[i * kGrayGrid + c] = detail::cell_overlap(i, c, static_cast<double>(W), kGrayGrid);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t c = 0; c < kGrayGrid; ++c)
      wy[i * kGrayGrid + c] = detail::cell_overlap(i, c, static_cast<double>(H), kGrayGrid);
  const double cell_area = (static_cast<double>(W) / kGrayGrid) * (static_cast<double>(H) / kGrayGrid);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const double v = px(static_cast<long>(x), static_cast<long>(y));
      if (v == 0.0) continue;
      for (std::size_t cy = 0; cy < kGrayGrid; ++cy) {
        const double a = wy[y * kGrayGrid + cy];
        if (a == 0.0) continue;
        for (std::size_t cx = 0; cx < kGrayGrid; ++cx) {
          const double b = wx[x * kGrayGrid + cx];
          if (b != 0.0) f.values[cy * kGrayGrid + cx] += a * b * v;
        }
      }
    }
  }
  for (std::size_t i = 0; i < kGrayGrid * kGrayGrid; ++i) f.values[i] /= cell_area;

  // Orientation histograms.
  constexpr double bin_width = std::numbers::pi / kOrientationBins;
  double* hist = f.values.data() + kGrayGrid * kGrayGrid;
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const long xi = static_cast<long>(x), yi = static_cast<long>(y);
      const double gx = (px(xi + 1, yi) - px(xi - 1, yi)) / 2.0;
      const double gy = (px(xi, yi + 1) - px(xi, yi - 1)) / 2.0;
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double angle = std::atan2(gy, gx);
      if (angle < 0.0) angle += std::numbers::pi;
      auto bin = static_cast<std::size_t>(angle / bin_width);
      if (bin >= kOrientationBins) bin = 0;  // angle == pi folds onto 0
      const std::size_t cell = (y * kGradientCells / H) * kGradientCells + (x * kGradientCells / W);
      hist[cell * kOrientationBins + bin] += mag;
    }
  }

  double energy = 0.0;
  for (double v : f.values) energy += v * v;
  if (energy > 0.0) {
    const double inv = 1.0 / std::sqrt(energy);
    for (double& v : f.values) v *= inv;
  }
  return f;
}

}  // namespace wspd
