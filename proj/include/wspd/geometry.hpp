#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "errors.hpp"

namespace wspd {

// Axis-aligned box in continuous pixel coordinates: (x, y) is the top-left
// corner, w and h are strictly positive. Area is w * h (no +1 convention).
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }
  bool valid() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) &&
           std::isfinite(h) && w > 0.0 && h > 0.0;
  }
  bool fits(double img_w, double img_h) const {
    return x >= 0.0 && y >= 0.0 && right() <= img_w && bottom() <= img_h;
  }

  friend bool operator==(const BBox&, const BBox&) = default;
  friend auto operator<=>(const BBox& a, const BBox& b) {
    return std::tie(a.x, a.y, a.w, a.h) <=> std::tie(b.x, b.y, b.w, b.h);
  }
};

inline std::ostream& operator<<(std::ostream& os, const BBox& b) {
  return os << '(' << b.x << ',' << b.y << ',' << b.w << ',' << b.h << ')';
}

inline double intersection_area(const BBox& a, const BBox& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

inline double iou(const BBox& a, const BBox& b) {
  if (a == b) return 1.0;
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return std::min(1.0, inter / uni);
}

inline BBox clamp_to_image(const BBox& b, double img_w, double img_h) {
  const double x0 = std::clamp(b.x, 0.0, img_w);
  const double y0 = std::clamp(b.y, 0.0, img_h);
  const double x1 = std::clamp(b.right(), 0.0, img_w);
  const double y1 = std::clamp(b.bottom(), 0.0, img_h);
  if (x1 - x0 <= 0.0 || y1 - y0 <= 0.0) {
    throw ClampCollapsed("box collapses when clamped to image");
  }
  if (x0 == b.x && y0 == b.y && x1 == b.right() && y1 == b.bottom()) return b;
  return BBox{x0, y0, x1 - x0, y1 - y0};
}

// 8-bit grayscale raster, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  bool empty() const { return width <= 0 || height <= 0; }
  std::uint8_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(int x, int y) {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

// Nearest integer, ties toward +infinity.
inline long round_half_up(double v) { return static_cast<long>(std::floor(v + 0.5)); }

// Integer pixel window of a box; the only rasterization site.
struct PixelRect {
  long x, y, w, h;
};

inline PixelRect rasterize(const BBox& b) {
  return PixelRect{round_half_up(b.x), round_half_up(b.y),
                   std::max(1L, round_half_up(b.w)),
                   std::max(1L, round_half_up(b.h))};
}

inline GrayImage crop_region(const GrayImage& image, const BBox& b) {
  const PixelRect r = rasterize(b);
  if (r.x < 0 || r.y < 0 || r.x + r.w > image.width ||
      r.y + r.h > image.height) {
    throw OutOfBounds("crop window exceeds image bounds");
  }
  GrayImage patch(static_cast<int>(r.w), static_cast<int>(r.h));
  for (long row = 0; row < r.h; ++row) {
    const auto* src = &image.pixels[static_cast<std::size_t>(r.y + row) *
                                        image.width + r.x];
    std::copy(src, src + r.w,
              patch.pixels.begin() + static_cast<std::ptrdiff_t>(row * r.w));
  }
  return patch;
}

}  // namespace wspd
