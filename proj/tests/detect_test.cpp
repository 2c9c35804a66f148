#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "test_util.hpp"
#include "wspd/detect.hpp"

using namespace wspd;

namespace {

std::vector<ImageRecord> manifest() {
  return {{"a", "a.pgm", 100, 80, std::nullopt, std::nullopt, std::nullopt},
          {"b", "b.pgm", 50, 50, std::nullopt, std::nullopt, std::nullopt}};
}

std::vector<Detection> rows(const std::string& text) {
  std::istringstream in(text);
  return parse_detection_rows(in);
}

Detection det(std::string image, std::string label, double score, BBox b = {1, 1, 10, 20}) {
  return Detection{std::move(image), std::move(label), score, b, false};
}

}  // namespace

TEST(Import, EmptyFile) {
  const auto res = import_detections(rows(""), manifest());
  EXPECT_TRUE(res.detections.empty());
  EXPECT_EQ(res.collapsed, 0u);
}

TEST(Import, UnknownImageRejected) {
  EXPECT_THROW(import_detections(rows(R"({"image_id":"zz","label":"person","score":0.9,"box":[0,0,5,5]})"), manifest()),
               UnknownImage);
}

TEST(Import, OverhangIsClamped) {
  // Right edge at 103 on a 100-wide image: 3 px overhang.
  const auto res =
      import_detections(rows(R"({"image_id":"a","label":"person","score":0.9,"box":[90,10,13,20]})"), manifest());
  ASSERT_EQ(res.detections.size(), 1u);
  EXPECT_EQ(res.detections[0].box, clamp_to_image(BBox{90, 10, 13, 20}, 100, 80));
  EXPECT_EQ(res.detections[0].box, (BBox{90, 10, 10, 20}));
}

TEST(Import, CollapsedBoxesCounted) {
  const auto res = import_detections(rows(R"({"image_id":"b","label":"person","score":0.9,"box":[60,60,5,5]}
{"image_id":"b","label":"person","score":0.9,"box":[0,0,5,5]})"),
                                     manifest());
  EXPECT_EQ(res.detections.size(), 1u);
  EXPECT_EQ(res.collapsed, 1u);
  EXPECT_EQ(res.rows, 2u);
}

TEST(Import, MalformedRows) {
  EXPECT_THROW(rows(R"({"image_id":"a","label":"person","score":1.2,"box":[0,0,5,5]})"), ParseError);
  EXPECT_THROW(rows(R"({"image_id":"a","label":"person","score":0.5,"box":[0,0,0,5]})"), ParseError);
  EXPECT_THROW(rows(R"({"image_id":"a","label":"person","score":0.5,"box":[0,0,5]})"), ParseError);
  EXPECT_THROW(rows(R"({"image_id":"a","score":0.5,"box":[0,0,5,5]})"), ParseError);
  EXPECT_THROW(rows("garbage"), ParseError);
}

TEST(Select, ThresholdAndLabelRule) {
  const std::vector<Detection> d = {det("a", "person", 0.85), det("a", "person", 0.80), det("a", "dog", 0.95),
                                    det("a", "person", 0.7999999)};
  const auto out = select_person_detections(d, 0.8);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].detector_score, 0.85);
  EXPECT_EQ(out[1].detector_score, 0.80);
  for (const auto& b : out) EXPECT_EQ(b.provenance, Provenance::Imported);
}

TEST(Select, IdsByDescendingScoreThenGeometry) {
  const std::vector<Detection> d = {det("b", "person", 0.9, {5, 5, 5, 5}), det("a", "person", 0.81, {0, 0, 5, 5}),
                                    det("a", "person", 0.95, {9, 9, 5, 5}), det("a", "person", 0.81, {0, 0, 4, 5})};
  const auto out = select_person_detections(d);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(out[0].box_id, "a#0");
  EXPECT_EQ(out[0].detector_score, 0.95);
  EXPECT_EQ(out[1].box_id, "a#1");
  EXPECT_EQ(out[1].box, (BBox{0, 0, 4, 5}));
  EXPECT_EQ(out[2].box_id, "a#2");
  EXPECT_EQ(out[3].box_id, "b#0");
}

TEST(Select, IndependentOfInputOrder) {
  Rng rng(4);
  std::vector<Detection> d;
  for (int i = 0; i < 200; ++i) {
    d.push_back(det(std::string(1, static_cast<char>('a' + uniform_index(rng, 5))), uniform_index(rng, 4) ? "person" : "cat",
                    std::round(uniform_real(rng, 0, 1) * 20) / 20, test_util::random_box(rng)));
  }
  const auto ref = select_person_detections(d);
  for (const auto& b : ref) EXPECT_GE(b.detector_score, 0.8);
  EXPECT_LE(ref.size(), d.size());
  for (int rep = 0; rep < 5; ++rep) {
    shuffle(std::span<Detection>(d), rng);
    EXPECT_EQ(select_person_detections(d), ref);
  }
}

TEST(Select, ThresholdRange) { EXPECT_THROW(select_person_detections({}, 1.5), ConfigError); }
