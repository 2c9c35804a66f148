#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "detect.hpp"
#include "errors.hpp"
#include "features.hpp"
#include "geometry.hpp"
#include "image_io.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace wspd {

struct TrainParams {
  double lambda = 1e-4;
  std::size_t epochs = 20;
  std::uint64_t seed = 42;
  friend bool operator==(const TrainParams&, const TrainParams&) = default;
};

struct LinearModel {
  std::vector<double> w;
  double b = 0.0;
  TrainParams training_meta;

  std::size_t dim() const { return w.size(); }
  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

enum class RefinementLabel { Person, Background };  // y_gt, y_bg

inline double score(const LinearModel& m, const FeatureVector& f) {
  if (f.dim() != m.dim()) {
    throw DimMismatch("feature dim " + std::to_string(f.dim()) + " != model dim " +
                      std::to_string(m.dim()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < f.dim(); ++i) s += m.w[i] * f.values[i];
  return s + m.b;
}

// Inclusive boundary: a margin of exactly zero is accepted.
inline RefinementLabel classify(const LinearModel& m, const FeatureVector& f) {
  return score(m, f) >= 0.0 ? RefinementLabel::Person : RefinementLabel::Background;
}

// lambda/2 * (|w|^2 + b^2) + mean hinge loss over both classes.
inline double svm_objective(const LinearModel& m, const std::vector<FeatureVector>& pos,
                            const std::vector<FeatureVector>& neg, double lambda) {
  double reg = m.b * m.b;
  for (double v : m.w) reg += v * v;
  double loss = 0.0;
  for (const auto& f : pos) loss += std::max(0.0, 1.0 - score(m, f));
  for (const auto& f : neg) loss += std::max(0.0, 1.0 + score(m, f));
  const auto n = static_cast<double>(pos.size() + neg.size());
  return 0.5 * lambda * reg + (n > 0 ? loss / n : 0.0);
}

// Pegasos: stochastic subgradient descent on the L2-regularized hinge loss
// with step 1/(lambda * t). The bias is an extra constant-1 coordinate, so it
// is shrunk and projected together with w. Each epoch is one pass in a seeded
// shuffled order. The returned model is the epoch-end iterate (or the zero
// start) with the lowest objective.
inline LinearModel train_svm(const std::vector<FeatureVector>& pos,
                             const std::vector<FeatureVector>& neg,
                             const TrainParams& params = {}) {
  if (pos.empty()) throw EmptyClass("no positive training examples");
  if (neg.empty()) throw EmptyClass("no negative training examples");
  if (!(params.lambda > 0.0)) throw ConfigError("lambda must be positive");
  const std::size_t dim = pos.front().dim();
  for (const auto* set : {&pos, &neg}) {
    for (const auto& f : *set) {
      if (f.dim() != dim) throw DimMismatch("training vectors have differing dims");
    }
  }

  struct Example {
    const FeatureVector* f;
    double y;
  };
  std::vector<Example> data;
  data.reserve(pos.size() + neg.size());
  for (const auto& f : pos) data.push_back({&f, +1.0});
  for (const auto& f : neg) data.push_back({&f, -1.0});

  LinearModel m;
  m.w.assign(dim, 0.0);
  m.training_meta = params;
  LinearModel best = m;
  double best_obj = svm_objective(m, pos, neg, params.lambda);

  const double radius = 1.0 / std::sqrt(params.lambda);
  Rng rng(params.seed);
  std::uint64_t t = 0;
  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    shuffle(std::span<Example>(data), rng);
    for (const auto& ex : data) {
      ++t;
      const double eta = 1.0 / (params.lambda * static_cast<double>(t));
      const double margin = ex.y * score(m, *ex.f);
      const double shrink = 1.0 - eta * params.lambda;
      for (double& v : m.w) v *= shrink;
      m.b *= shrink;
      if (margin < 1.0) {
        const auto& x = ex.f->values;
        for (std::size_t i = 0; i < dim; ++i) m.w[i] += eta * ex.y * x[i];
        m.b += eta * ex.y;
      }
      double norm2 = m.b * m.b;
      for (double v : m.w) norm2 += v * v;
      if (norm2 > radius * radius) {
        const double s = radius / std::sqrt(norm2);
        for (double& v : m.w) v *= s;
        m.b *= s;
      }
    }
    const double obj = svm_objective(m, pos, neg, params.lambda);
    if (obj < best_obj) {
      best_obj = obj;
      best = m;
    }
  }
  return best;
}

// --- model and feature files -------------------------------------------------

inline json model_to_json(const LinearModel& m) {
  return {{"dim", m.dim()},
          {"w", m.w},
          {"b", m.b},
          {"training_meta",
           {{"lambda", m.training_meta.lambda},
            {"epochs", m.training_meta.epochs},
            {"seed", m.training_meta.seed}}}};
}

inline LinearModel model_from_json(const json& j) {
  LinearModel m;
  try {
    m.w = j.at("w").get<std::vector<double>>();
    m.b = j.at("b").get<double>();
    const auto dim = j.at("dim").get<std::size_t>();
    if (dim != m.w.size()) throw DimMismatch("model dim does not match length of w");
    if (j.contains("training_meta")) {
      const auto& t = j["training_meta"];
      m.training_meta.lambda = t.value("lambda", m.training_meta.lambda);
      m.training_meta.epochs = t.value("epochs", m.training_meta.epochs);
      m.training_meta.seed = t.value("seed", m.training_meta.seed);
    }
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("bad model file: ") + e.what());
  }
  if (!std::isfinite(m.b) || !FeatureVector{m.w}.finite()) {
    throw ParseError(0, "model has non-finite entries");
  }
  return m;
}

inline void save_model(const LinearModel& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model " + path.string());
  out << model_to_json(m).dump(2) << '\n';
}

inline LinearModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model " + path.string());
  try {
    return model_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError(0, std::string("invalid model JSON: ") + e.what());
  }
}

// External feature rows: JSONL {box_id, values:[...]}.
inline std::map<std::string, FeatureVector> parse_feature_rows(std::istream& in) {
  std::map<std::string, FeatureVector> out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    try {
      const json j = json::parse(line);
      FeatureVector f{j.at("values").get<std::vector<double>>()};
      if (!f.finite()) throw ParseError(line_no, "non-finite feature value");
      if (out.empty()) dim = f.dim();
      if (f.dim() != dim) throw DimMismatch("feature row at line " + std::to_string(line_no) + " has a different dim");
      const auto id = j.at("box_id").get<std::string>();
      if (!out.emplace(id, std::move(f)).second) throw DuplicateId("duplicate feature row for '" + id + "'");
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

inline std::map<std::string, FeatureVector> load_feature_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature file " + path.string());
  return parse_feature_rows(in);
}

inline void write_feature_row(std::ostream& out, const std::string& box_id, const FeatureVector& f) {
  out << json{{"box_id", box_id}, {"values", f.values}}.dump() << '\n';
}

// --- feature sources ---------------------------------------------------------

class FeatureSource {
 public:
  virtual ~FeatureSource() = default;
  virtual FeatureVector features(const PersonBox& box) = 0;
};

// Crops the box from its corpus image and runs builtin_features.
class BuiltinFeatureSource : public FeatureSource {
 public:
  BuiltinFeatureSource(const std::vector<ImageRecord>& images, ImageStore& store)
      : images_(images), index_(index_images(images)), store_(store) {}

  FeatureVector features(const PersonBox& box) override {
    auto it = index_.find(box.image_id);
    if (it == index_.end()) throw UnknownImage("box '" + box.box_id + "' references unknown image");
    const auto img = store_.get(images_[it->second].path);
    return builtin_features(crop_region(*img, box.box));
  }

 private:
  const std::vector<ImageRecord>& images_;
  ImageIndex index_;
  ImageStore& store_;
};

// Precomputed embeddings keyed by box_id.
class FileFeatureSource : public FeatureSource {
 public:
  explicit FileFeatureSource(std::map<std::string, FeatureVector> rows) : rows_(std::move(rows)) {}
  explicit FileFeatureSource(const std::filesystem::path& path) : rows_(load_feature_rows(path)) {}

  FeatureVector features(const PersonBox& box) override {
    auto it = rows_.find(box.box_id);
    if (it == rows_.end()) throw MissingFeature("no feature row for box '" + box.box_id + "'");
    return it->second;
  }

 private:
  std::map<std::string, FeatureVector> rows_;
};

// --- refinement --------------------------------------------------------------

struct RefinementReport {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::size_t dropped = 0;
  double kept_ratio = 0.0;  // 0 for empty input
  // Images that had input boxes but none survived.
  std::vector<std::string> emptied_images;

  json to_json() const {
    return {{"input", input}, {"kept", kept}, {"dropped", dropped},
            {"kept_ratio", kept_ratio}, {"emptied_images", emptied_images}};
  }
};

struct RefinementResult {
  std::vector<PersonBox> kept;
  RefinementReport report;
};

// Keeps exactly the boxes classified as person; kept boxes are marked refined.
// Input order is preserved. Features are computed in parallel.
inline RefinementResult refine_dataset(const std::vector<PersonBox>& boxes, const LinearModel& model,
                                       FeatureSource& features, unsigned workers = worker_count()) {
  std::vector<char> accept(boxes.size(), 0);
  parallel_for(
      boxes.size(),
      [&](std::size_t i) {
        accept[i] = classify(model, features.features(boxes[i])) == RefinementLabel::Person;
      },
      workers);
  RefinementResult res;
  std::set<std::string> seen_images, surviving_images;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    seen_images.insert(boxes[i].image_id);
    if (!accept[i]) continue;
    PersonBox b = boxes[i];
    b.provenance = Provenance::Refined;
    surviving_images.insert(b.image_id);
    res.kept.push_back(std::move(b));
  }
  res.report.input = boxes.size();
  res.report.kept = res.kept.size();
  res.report.dropped = boxes.size() - res.kept.size();
  res.report.kept_ratio =
      boxes.empty() ? 0.0 : static_cast<double>(res.kept.size()) / static_cast<double>(boxes.size());
  for (const auto& id : seen_images) {
    if (!surviving_images.count(id)) res.report.emptied_images.push_back(id);
  }
  return res;
}

// --- training data -----------------------------------------------------------

struct NegativeCropParams {
  double min_height_frac = 0.1;
  double max_height_frac = 0.6;
  double max_iou = 0.1;
  std::size_t max_tries = 50;
};

// Random square background crops whose IoU with every person box on the
// image stays below `max_iou`. May return fewer than `count` crops when the
// image is crowded.
inline std::vector<BBox> sample_negative_crops(const ImageRecord& image,
                                               const std::vector<BBox>& person_boxes,
                                               std::size_t count, Rng& rng,
                                               const NegativeCropParams& p = {}) {
  std::vector<BBox> out;
  const double H = image.height, W = image.width;
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t attempt = 0; attempt < p.max_tries; ++attempt) {
      double side = uniform_real(rng, p.min_height_frac * H, p.max_height_frac * H);
      side = std::min({side, W, H});
      if (side < 1.0) break;
      const BBox c{std::floor(uniform_real(rng, 0.0, W - side + 1.0)),
                   std::floor(uniform_real(rng, 0.0, H - side + 1.0)), std::floor(side), std::floor(side)};
      if (!c.fits(W, H)) continue;
      bool clear = true;
      for (const auto& pb : person_boxes) {
        if (iou(c, pb) >= p.max_iou) {
          clear = false;
          break;
        }
      }
      if (clear) {
        out.push_back(c);
        break;
      }
    }
  }
  return out;
}

}  // namespace wspd
