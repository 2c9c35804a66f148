#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "oracles.hpp"
#include "test_util.hpp"
#include "wspd/noiselab.hpp"

using namespace wspd;

namespace {

// 20 images of 200x150, each with boxes laid out on a loose grid so that
// plenty of free space remains.
Dataset grid_dataset(std::size_t n_boxes) {
  Dataset ds;
  const std::size_t per_image = 5;
  for (std::size_t i = 0; i * per_image < n_boxes; ++i) {
    ds.images.push_back({"im" + std::to_string(i), "im.pgm", 200, 150, std::nullopt, std::nullopt, std::nullopt});
  }
  for (std::size_t k = 0; k < n_boxes; ++k) {
    const std::string img = "im" + std::to_string(k / per_image);
    const double slot = static_cast<double>(k % per_image);
    ds.boxes.push_back({img + "#" + std::to_string(k % per_image), img, {5 + 38 * slot, 10, 12, 40}, 0.9,
                        Provenance::Refined});
  }
  return ds;
}

void check_invariants(const Dataset& in, const NoiseResult& r) {
  ASSERT_EQ(r.dataset.boxes.size(), in.boxes.size());
  std::map<std::string, std::vector<BBox>> originals;
  for (const auto& b : in.boxes) originals[b.image_id].push_back(b.box);
  std::set<std::string> moved;
  for (const auto& e : r.log)
    if (e.new_box) moved.insert(e.box_id);
  for (std::size_t i = 0; i < in.boxes.size(); ++i) {
    const auto& a = in.boxes[i];
    const auto& b = r.dataset.boxes[i];
    EXPECT_EQ(a.box_id, b.box_id);
    if (!moved.count(a.box_id)) {
      EXPECT_EQ(a, b);
      continue;
    }
    EXPECT_EQ(b.provenance, Provenance::NoiseTranslated);
    EXPECT_EQ(b.box.w, a.box.w);
    EXPECT_EQ(b.box.h, a.box.h);
    EXPECT_TRUE(b.box.fits(200, 150));
    for (const auto& o : originals[a.image_id]) EXPECT_EQ(iou(b.box, o), 0.0) << a.box_id;
  }
}

}  // namespace

TEST(NoiseCount, RoundsHalfUp) {
  EXPECT_EQ(noise_count(0.5, 10), 5u);
  EXPECT_EQ(noise_count(0.25, 10), 3u);  // 2.5
  EXPECT_EQ(noise_count(0.05, 10), 1u);  // 0.5
  EXPECT_EQ(noise_count(0.3, 10), 3u);
  EXPECT_EQ(noise_count(0.7, 10), 7u);
  EXPECT_EQ(noise_count(1.0, 7), 7u);
  EXPECT_EQ(noise_count(0.0, 7), 0u);
  for (int r = 0; r <= 10; ++r) EXPECT_EQ(noise_count(r / 10.0, 1000), static_cast<std::size_t>(100 * r));
}

TEST(Spec, Validation) {
  EXPECT_THROW((NoiseSpec{-0.1, 0, 10}.validate()), ConfigError);
  EXPECT_THROW((NoiseSpec{1.1, 0, 10}.validate()), ConfigError);
  EXPECT_THROW((NoiseSpec{0.5, 0, 0}.validate()), ConfigError);
}

TEST(Relocate, UnconstrainedKeepsSize) {
  Rng rng(3);
  const PersonBox b{"x#0", "x", {10.5, 20.25, 30, 40}, 0.9, Provenance::Refined};
  for (int i = 0; i < 100; ++i) {
    const auto out = relocate_box(b, {}, 640, 480, rng);
    EXPECT_EQ(out.box.w, 30);
    EXPECT_EQ(out.box.h, 40);
    EXPECT_TRUE(out.box.fits(640, 480));
    EXPECT_EQ(intersection_area(out.box, b.box), 0.0);
  }
}

TEST(Relocate, FullImageBlocked) {
  Rng rng(3);
  const PersonBox b{"x#0", "x", {10, 10, 10, 10}, 0.9, Provenance::Refined};
  EXPECT_THROW(relocate_box(b, {{0, 0, 100, 100}}, 100, 100, rng), NoValidPlacement);
  EXPECT_THROW(relocate_box({"y", "x", {0, 0, 120, 10}, 0.9, Provenance::Refined}, {}, 100, 100, rng),
               NoValidPlacement);
}

TEST(Relocate, HalfBlockedRegion) {
  // Every free integer position lies in the right half.
  const auto free = oracle::free_positions({{0, 0, 50, 100}, {60, 40, 10, 10}}, 10, 10, 100, 100);
  ASSERT_FALSE(free.empty());
  for (const auto& [x, y] : free) ASSERT_GE(x, 50);

  Rng rng(17);
  const PersonBox b{"x#0", "x", {60, 40, 10, 10}, 0.9, Provenance::Refined};
  for (int i = 0; i < 500; ++i) {
    const auto out = relocate_box(b, {{0, 0, 50, 100}}, 100, 100, rng);
    EXPECT_GE(out.box.x, 50.0);
    EXPECT_EQ(intersection_area(out.box, {0, 0, 50, 100}), 0.0);
    EXPECT_EQ(intersection_area(out.box, b.box), 0.0);
  }
}

TEST(Relocate, ScanFindsSingleSlot) {
  // A single free integer slot: rejection sampling almost surely fails and the
  // scan must land exactly on it.
  const std::vector<BBox> gts = {{0, 0, 100, 40}, {0, 50, 100, 50}, {0, 40, 30, 10}, {40, 40, 60, 10}};
  std::vector<oracle::IBox> ib;
  for (const auto& g : gts) ib.push_back({std::int64_t(g.x), std::int64_t(g.y), std::int64_t(g.w), std::int64_t(g.h)});
  const auto free = oracle::free_positions(ib, 10, 10, 100, 100);
  ASSERT_EQ(free.size(), 1u);
  Rng rng(1);
  const PersonBox b{"x#0", "x", {0, 0, 10, 10}, 0.9, Provenance::Refined};
  const auto out = relocate_box(b, gts, 100, 100, rng, 5);
  EXPECT_EQ(out.box, (BBox{30, 40, 10, 10}));
}

TEST(Inject, RateZeroIsIdentity) {
  const auto ds = grid_dataset(100);
  const auto r = inject_noise(ds, {0.0, 9, 100});
  EXPECT_EQ(r.dataset.boxes, ds.boxes);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(dataset_to_json(r.dataset.boxes, r.dataset.images).dump(), dataset_to_json(ds.boxes, ds.images).dump());
}

TEST(Inject, HalfOfTen) {
  const auto ds = grid_dataset(10);
  const auto r = inject_noise(ds, {0.5, 1, 100});
  EXPECT_EQ(r.log.size(), 5u);
  EXPECT_EQ(r.moved(), 5u);
  check_invariants(ds, r);
}

TEST(Inject, EveryRateOnThousandBoxes) {
  const auto ds = grid_dataset(1000);
  for (int k = 0; k <= 10; ++k) {
    const auto r = inject_noise(ds, {k / 10.0, 77, 100});
    EXPECT_EQ(r.log.size(), noise_count(k / 10.0, 1000));
    EXPECT_EQ(r.moved() + r.failures(), r.log.size());
    check_invariants(ds, r);
  }
}

TEST(Inject, FailuresKeepOriginalBox) {
  Dataset ds;
  ds.images.push_back({"full", "f.pgm", 50, 50, std::nullopt, std::nullopt, std::nullopt});
  ds.images.push_back({"open", "o.pgm", 200, 200, std::nullopt, std::nullopt, std::nullopt});
  ds.boxes.push_back({"full#0", "full", {0, 0, 50, 50}, 0.9, Provenance::Refined});
  ds.boxes.push_back({"open#0", "open", {0, 0, 20, 20}, 0.9, Provenance::Refined});
  const auto r = inject_noise(ds, {1.0, 4, 10});
  EXPECT_EQ(r.failures(), 1u);
  EXPECT_EQ(r.moved(), 1u);
  EXPECT_EQ(r.dataset.boxes[0], ds.boxes[0]);
  std::ostringstream os;
  write_noise_log(r.log, os);
  EXPECT_NE(os.str().find("\"new\":\"failed\""), std::string::npos);
}

TEST(Inject, Deterministic) {
  const auto ds = grid_dataset(200);
  const auto a = inject_noise(ds, {0.4, 123, 100});
  const auto b = inject_noise(ds, {0.4, 123, 100});
  EXPECT_EQ(a.dataset.boxes, b.dataset.boxes);
  const auto c = inject_noise(ds, {0.4, 124, 100});
  EXPECT_NE(a.dataset.boxes, c.dataset.boxes);
}

TEST(Inject, SelectionIsUniform) {
  // Each of 20 boxes should be picked about rate * reps times.
  const auto ds = grid_dataset(20);
  std::map<std::string, int> hits;
  const int reps = 2000;
  for (int s = 0; s < reps; ++s)
    for (const auto& e : inject_noise(ds, {0.25, static_cast<std::uint64_t>(s), 100}).log) ++hits[e.box_id];
  for (const auto& b : ds.boxes) EXPECT_NEAR(hits[b.box_id] / double(reps), 0.25, 0.04) << b.box_id;
}
