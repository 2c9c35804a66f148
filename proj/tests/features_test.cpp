#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_util.hpp"
#include "wspd/features.hpp"

using namespace wspd;

namespace {

// Reference descriptor written as plain pixel loops. Valid for patches whose
// sides are multiples of 8, where area averaging reduces to block means.
std::vector<double> reference_features(const GrayImage& p) {
  const int W = p.width, H = p.height;
  std::vector<double> v(96, 0.0);
  const int bw = W / 8, bh = H / 8;
  for (int cy = 0; cy < 8; ++cy) {
    for (int cx = 0; cx < 8; ++cx) {
      double s = 0;
      for (int y = cy * bh; y < (cy + 1) * bh; ++y)
        for (int x = cx * bw; x < (cx + 1) * bw; ++x) s += p.at(x, y) / 255.0;
      v[cy * 8 + cx] = s / (bw * bh);
    }
  }
  auto I = [&](int x, int y) {
    x = std::min(std::max(x, 0), W - 1);
    y = std::min(std::max(y, 0), H - 1);
    return p.at(x, y) / 255.0;
  };
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double gx = 0.5 * (I(x + 1, y) - I(x - 1, y));
      const double gy = 0.5 * (I(x, y + 1) - I(x, y - 1));
      const double m = std::sqrt(gx * gx + gy * gy);
      if (m == 0) continue;
      double a = std::atan2(gy, gx);
      while (a < 0) a += std::numbers::pi;
      while (a >= std::numbers::pi) a -= std::numbers::pi;
      const int bin = std::min(7, static_cast<int>(a / (std::numbers::pi / 8)));
      const int cell = (y < H / 2 ? 0 : 2) + (x < W / 2 ? 0 : 1);
      v[64 + cell * 8 + bin] += m;
    }
  }
  double n = 0;
  for (double x : v) n += x * x;
  if (n > 0)
    for (double& x : v) x /= std::sqrt(n);
  return v;
}

}  // namespace

TEST(BuiltinFeatures, Length96) {
  EXPECT_EQ(builtin_features(GrayImage(3, 5, 7)).dim(), 96u);
  EXPECT_EQ(builtin_features(GrayImage(1, 1, 7)).dim(), 96u);
  EXPECT_EQ(builtin_features(GrayImage(37, 91, 7)).dim(), 96u);
}

TEST(BuiltinFeatures, EmptyPatch) { EXPECT_THROW(builtin_features(GrayImage{}), EmptyPatch); }

TEST(BuiltinFeatures, UniformPatchHasNoGradient) {
  const auto f = builtin_features(GrayImage(13, 29, 128));
  for (std::size_t i = 64; i < 96; ++i) EXPECT_EQ(f.values[i], 0.0);
  // Only gray cells carry energy, all equal, so each is 1/8 after normalization.
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(f.values[i], 1.0 / 8.0, 1e-12);
}

TEST(BuiltinFeatures, AllBlackIsZeroVector) {
  const auto f = builtin_features(GrayImage(10, 10, 0));
  for (double v : f.values) EXPECT_EQ(v, 0.0);
}

TEST(BuiltinFeatures, VerticalEdgeFrozenValues) {
  // 16x16, left half 0, right half 255. Gray grid: columns 4..7 are 1.
  // Gradient: columns 7 and 8 have gx = 0.5, angle 0 -> bin 0; each of the
  // four cells receives 8 rows * 0.5 = 4. Norm = sqrt(32 * 1 + 4 * 16) = sqrt(96).
  GrayImage img(16, 16, 0);
  for (int y = 0; y < 16; ++y)
    for (int x = 8; x < 16; ++x) img.at(x, y) = 255;
  const auto f = builtin_features(img);
  const double n = std::sqrt(96.0);
  for (int cy = 0; cy < 8; ++cy)
    for (int cx = 0; cx < 8; ++cx) EXPECT_NEAR(f.values[cy * 8 + cx], cx >= 4 ? 1.0 / n : 0.0, 1e-12);
  for (int cell = 0; cell < 4; ++cell) {
    for (int bin = 0; bin < 8; ++bin) {
      EXPECT_NEAR(f.values[64 + cell * 8 + bin], bin == 0 ? 4.0 / n : 0.0, 1e-12) << cell << "/" << bin;
    }
  }
  EXPECT_EQ(reference_features(img), reference_features(img));
  const auto ref = reference_features(img);
  for (std::size_t i = 0; i < 96; ++i) EXPECT_NEAR(f.values[i], ref[i], 1e-12);
}

TEST(BuiltinFeatures, MatchesPixelLoopReferenceOnRandomPatches) {
  Rng rng(9);
  for (auto [w, h] : {std::pair{16, 16}, std::pair{24, 32}, std::pair{8, 64}, std::pair{40, 16}}) {
    for (int rep = 0; rep < 10; ++rep) {
      GrayImage img(w, h);
      for (auto& p : img.pixels) p = static_cast<std::uint8_t>(uniform_index(rng, 256));
      const auto f = builtin_features(img);
      const auto ref = reference_features(img);
      for (std::size_t i = 0; i < 96; ++i) ASSERT_NEAR(f.values[i], ref[i], 1e-12) << w << "x" << h << " #" << i;
    }
  }
}

TEST(BuiltinFeatures, NonDivisibleSizesAreAreaAveraged) {
  // A 12x12 constant-per-column ramp: each of the 8 cells spans 1.5 columns.
  GrayImage img(12, 12);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) img.at(x, y) = static_cast<std::uint8_t>(x * 20);
  auto f = builtin_features(img);
  // Undo normalization using the first cell: columns 0 and half of 1 -> (0 + 0.5*20)/1.5/255.
  const double c0 = (0.0 + 0.5 * 20.0) / 1.5 / 255.0;
  const double c1 = (0.5 * 20.0 + 40.0) / 1.5 / 255.0;
  EXPECT_NEAR(f.values[1] / f.values[0], c1 / c0, 1e-12);
  EXPECT_NEAR(f.values[8], f.values[0], 1e-15);
}
