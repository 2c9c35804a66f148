#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_util.hpp"
#include "wspd/refine.hpp"

using namespace wspd;

namespace {

LinearModel model(std::vector<double> w, double b) { return LinearModel{std::move(w), b, {}}; }

}  // namespace

TEST(Score, ZeroModel) {
  const auto m = model({0, 0, 0}, 0);
  EXPECT_EQ(score(m, {{1, -2, 3}}), 0.0);
  EXPECT_EQ(classify(m, {{1, -2, 3}}), RefinementLabel::Person);
}

TEST(Score, HandDotProduct) { EXPECT_DOUBLE_EQ(score(model({1, 2}, 0.5), {{3, -1}}), 1.5); }

TEST(Score, DimMismatch) {
  EXPECT_THROW(score(model({1}, 0), {{1, 2}}), DimMismatch);
  EXPECT_THROW(classify(model({1}, 0), {{1, 2}}), DimMismatch);
}

TEST(Classify, InclusiveZeroBoundary) {
  EXPECT_EQ(classify(model({1, 0}, -2), {{2, 5}}), RefinementLabel::Person);       // score 0
  EXPECT_EQ(classify(model({1, 0}, -2.3), {{2, 5}}), RefinementLabel::Background);  // -0.3
}

TEST(Classify, AgreesWithScoreSign) {
  Rng rng(21);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> w(4), x(4);
    for (auto& v : w) v = uniform_real(rng, -1, 1);
    for (auto& v : x) v = uniform_real(rng, -1, 1);
    const auto m = model(w, uniform_real(rng, -1, 1));
    const FeatureVector f{x};
    EXPECT_EQ(classify(m, f) == RefinementLabel::Person, score(m, f) >= 0.0);
  }
}

TEST(Train, TwoPointSignPattern) {
  const auto m = train_svm({{{1, 0}}}, {{{-1, 0}}}, {0.01, 50, 42});
  EXPECT_GT(score(m, {{1, 0}}), 0.0);
  EXPECT_LT(score(m, {{-1, 0}}), 0.0);
  // Max-margin direction for this pair is (1, 0).
  EXPECT_GT(m.w[0], 0.0);
  EXPECT_NEAR(m.w[1], 0.0, 1e-12);
}

TEST(Train, EmptyClassAndDims) {
  EXPECT_THROW(train_svm({{{1, 0}}}, {}), EmptyClass);
  EXPECT_THROW(train_svm({}, {{{1, 0}}}), EmptyClass);
  EXPECT_THROW(train_svm({{{1, 0}}}, {{{1, 0, 0}}}), DimMismatch);
}

TEST(Train, DegenerateIdenticalClassesFinite) {
  const FeatureVector f{{0.3, -0.7}};
  const auto m = train_svm({f}, {f});
  EXPECT_TRUE(std::isfinite(m.b));
  EXPECT_TRUE(FeatureVector{m.w}.finite());
  EXPECT_TRUE(std::isfinite(svm_objective(m, {f}, {f}, 1e-4)));
}

TEST(Train, BitIdenticalRepeats) {
  const auto s = test_util::separable_set(100, 6, 0.5, 3);
  const auto a = train_svm(s.pos, s.neg, {1e-4, 20, 42});
  const auto b = train_svm(s.pos, s.neg, {1e-4, 20, 42});
  EXPECT_EQ(a, b);
  const auto c = train_svm(s.pos, s.neg, {1e-4, 20, 43});
  EXPECT_NE(a.w, c.w);
}

TEST(Train, SeparableSetFullyFit) {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto s = test_util::separable_set(100, 5, 0.5, seed);
    const auto m = train_svm(s.pos, s.neg);
    for (const auto& f : s.pos) EXPECT_EQ(classify(m, f), RefinementLabel::Person) << seed;
    for (const auto& f : s.neg) EXPECT_EQ(classify(m, f), RefinementLabel::Background) << seed;
  }
}

TEST(Train, ObjectiveNotWorseThanZeroModel) {
  for (std::uint64_t seed : {7, 8, 9}) {
    const auto s = test_util::separable_set(60, 4, 0.1, seed);
    const TrainParams p{1e-3, 10, seed};
    const auto m = train_svm(s.pos, s.neg, p);
    EXPECT_LE(svm_objective(m, s.pos, s.neg, p.lambda), svm_objective(model(std::vector<double>(4, 0.0), 0), s.pos, s.neg, p.lambda));
  }
}

TEST(ModelFile, RoundTrip) {
  const auto dir = test_util::scratch_dir("model");
  const auto s = test_util::separable_set(20, 3, 0.5, 1);
  const auto m = train_svm(s.pos, s.neg, {1e-3, 5, 9});
  save_model(m, dir / "m.json");
  EXPECT_EQ(load_model(dir / "m.json"), m);
  EXPECT_THROW(model_from_json(json::parse(R"({"dim":3,"w":[1,2],"b":0})")), DimMismatch);
  EXPECT_THROW(load_model(dir / "missing.json"), IoError);
}

TEST(FeatureFile, ParseAndLookup) {
  std::istringstream in(R"({"box_id":"a#0","values":[1,2]}
{"box_id":"a#1","values":[3,4]})");
  FileFeatureSource src(parse_feature_rows(in));
  PersonBox b{"a#1", "a", {0, 0, 1, 1}, 0.9, Provenance::Imported};
  EXPECT_EQ(src.features(b).values, (std::vector<double>{3, 4}));
  b.box_id = "a#7";
  EXPECT_THROW(src.features(b), MissingFeature);
  std::istringstream bad(R"({"box_id":"a","values":[1]}
{"box_id":"b","values":[1,2]})");
  EXPECT_THROW(parse_feature_rows(bad), DimMismatch);
}

namespace {

struct SyntheticBoxes {
  std::vector<PersonBox> boxes;
  std::map<std::string, FeatureVector> features;
};

SyntheticBoxes synthetic_boxes(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  SyntheticBoxes s;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string image = "img" + std::to_string(i / 7);
    const std::string id = image + "#" + std::to_string(i % 7);
    s.boxes.push_back({id, image, {1, 1, 10, 10}, 0.9, Provenance::Imported});
    FeatureVector f;
    for (int k = 0; k < 8; ++k) f.values.push_back(uniform_real(rng, -1, 1));
    s.features[id] = f;
  }
  return s;
}

}  // namespace

TEST(RefineDataset, AcceptAll) {
  auto s = synthetic_boxes(30, 1);
  FileFeatureSource src(s.features);
  const auto res = refine_dataset(s.boxes, model(std::vector<double>(8, 0.0), 1.0), src);
  ASSERT_EQ(res.kept.size(), s.boxes.size());
  EXPECT_EQ(res.report.kept_ratio, 1.0);
  for (std::size_t i = 0; i < res.kept.size(); ++i) {
    EXPECT_EQ(res.kept[i].box_id, s.boxes[i].box_id);
    EXPECT_EQ(res.kept[i].provenance, Provenance::Refined);
  }
  EXPECT_TRUE(res.report.emptied_images.empty());
}

TEST(RefineDataset, RejectAll) {
  auto s = synthetic_boxes(30, 1);
  FileFeatureSource src(s.features);
  const auto res = refine_dataset(s.boxes, model(std::vector<double>(8, 0.0), -1.0), src);
  EXPECT_TRUE(res.kept.empty());
  EXPECT_EQ(res.report.kept_ratio, 0.0);
  EXPECT_EQ(res.report.dropped, 30u);
  EXPECT_EQ(res.report.emptied_images.size(), 5u);  // img0..img4
}

TEST(RefineDataset, EqualsPerBoxClassify) {
  auto s = synthetic_boxes(1000, 2);
  Rng rng(3);
  std::vector<double> w(8);
  for (auto& v : w) v = uniform_real(rng, -1, 1);
  const auto m = model(w, 0.1);
  FileFeatureSource src(s.features);
  const auto res = refine_dataset(s.boxes, m, src, 4);
  std::vector<std::string> expected;
  for (const auto& b : s.boxes) {
    if (classify(m, s.features.at(b.box_id)) == RefinementLabel::Person) expected.push_back(b.box_id);
  }
  std::vector<std::string> got;
  for (const auto& b : res.kept) got.push_back(b.box_id);
  EXPECT_EQ(got, expected);
  EXPECT_GT(got.size(), 0u);
  EXPECT_LT(got.size(), 1000u);
  EXPECT_EQ(res.report.input, 1000u);
  EXPECT_EQ(res.report.kept + res.report.dropped, 1000u);
  // Idempotent under a fixed model.
  const auto again = refine_dataset(res.kept, m, src);
  EXPECT_EQ(again.kept.size(), res.kept.size());
}

TEST(RefineDataset, TenBoxesSixKept) {
  std::vector<PersonBox> boxes;
  std::map<std::string, FeatureVector> feats;
  const double xs[10] = {0.5, -0.2, 0.0, 1.0, -3.0, 2.0, -0.01, 0.7, -1.0, 0.2};
  for (int i = 0; i < 10; ++i) {
    const std::string id = "i#" + std::to_string(i);
    boxes.push_back({id, "i", {0, 0, 1, 1}, 0.9, Provenance::Imported});
    feats[id] = FeatureVector{{xs[i]}};
  }
  FileFeatureSource src(feats);
  const auto res = refine_dataset(boxes, model({1.0}, 0.0), src);
  ASSERT_EQ(res.kept.size(), 6u);  // 0.5, 0.0, 1.0, 2.0, 0.7, 0.2
  EXPECT_EQ(res.kept[1].box_id, "i#2");
}

TEST(RefineDataset, MissingFeaturePropagates) {
  auto s = synthetic_boxes(5, 1);
  s.features.erase(s.boxes[3].box_id);
  FileFeatureSource src(s.features);
  EXPECT_THROW(refine_dataset(s.boxes, model(std::vector<double>(8, 0.0), 1.0), src), MissingFeature);
}

TEST(NegativeCrops, AvoidPersons) {
  ImageRecord img{"x", "x", 200, 100, std::nullopt, std::nullopt, std::nullopt};
  const std::vector<BBox> persons = {{10, 10, 20, 60}, {120, 20, 25, 70}};
  Rng rng(5);
  const auto crops = sample_negative_crops(img, persons, 50, rng);
  EXPECT_GT(crops.size(), 40u);
  for (const auto& c : crops) {
    EXPECT_TRUE(c.fits(200, 100));
    EXPECT_GE(c.h, 10.0 - 1.0);
    EXPECT_LE(c.h, 60.0);
    for (const auto& p : persons) EXPECT_LT(iou(c, p), 0.1);
  }
}
