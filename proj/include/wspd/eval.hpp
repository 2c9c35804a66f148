#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "detect.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "parallel.hpp"

namespace wspd {

struct ScoredBox {
  BBox box;
  double score = 0.0;
};

struct GtBox {
  BBox box;
  bool ignore = false;
};

struct EvalImage {
  std::string image_id;
  std::vector<ScoredBox> dets;
  std::vector<GtBox> gts;
};

struct MatchParams {
  double iou_thresh = 0.5;
  double min_height = 50.0;  // gts shorter than this are ignored
};

enum class DetOutcome { TruePositive, FalsePositive, Ignored };

// Indices refer to the image's dets / gts vectors.
struct ImageMatch {
  std::vector<std::pair<std::size_t, std::size_t>> true_positives;  // (det, gt)
  std::vector<std::size_t> false_positives;
  std::vector<std::size_t> false_negatives;
  std::vector<std::size_t> ignored_dets;  // matched an ignored gt, not scored
  std::vector<DetOutcome> outcome;        // per det
};

struct MatchResult {
  std::vector<ImageMatch> images;

  std::size_t tp() const { return sum([](const ImageMatch& m) { return m.true_positives.size(); }); }
  std::size_t fp() const { return sum([](const ImageMatch& m) { return m.false_positives.size(); }); }
  std::size_t fn() const { return sum([](const ImageMatch& m) { return m.false_negatives.size(); }); }

 private:
  template <typename Fn>
  std::size_t sum(Fn fn) const {
    std::size_t s = 0;
    for (const auto& m : images) s += fn(m);
    return s;
  }
};

inline bool gt_ignored(const GtBox& g, const MatchParams& p) { return g.ignore || g.box.h < p.min_height; }

// Greedy matching. Detections are visited in descending score (ties: input
// order); each claims the still-unmatched gt with the highest IoU >= the
// threshold (ties: lower gt index). A det that claims an ignored gt is
// dropped from scoring; ignored gts are never false negatives.
inline ImageMatch match_image(const EvalImage& img, const MatchParams& p) {
  ImageMatch m;
  m.outcome.assign(img.dets.size(), DetOutcome::FalsePositive);
  std::vector<std::size_t> order(img.dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return img.dets[a].score > img.dets[b].score; });
  std::vector<char> taken(img.gts.size(), 0);
  for (std::size_t d : order) {
    std::size_t best = img.gts.size();
    double best_iou = p.iou_thresh;
    for (std::size_t g = 0; g < img.gts.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(img.dets[d].box, img.gts[g].box);
      if (v >= best_iou && (best == img.gts.size() || v > best_iou)) {
        best = g;
        best_iou = v;
      }
    }
    if (best == img.gts.size()) {
      m.false_positives.push_back(d);
      continue;
    }
    taken[best] = 1;
    if (gt_ignored(img.gts[best], p)) {
      m.outcome[d] = DetOutcome::Ignored;
      m.ignored_dets.push_back(d);
    } else {
      m.outcome[d] = DetOutcome::TruePositive;
      m.true_positives.emplace_back(d, best);
    }
  }
  for (std::size_t g = 0; g < img.gts.size(); ++g) {
    if (!taken[g] && !gt_ignored(img.gts[g], p)) m.false_negatives.push_back(g);
  }
  return m;
}

inline MatchResult match_detections(const std::vector<EvalImage>& images, const MatchParams& p = {}) {
  if (!(p.iou_thresh > 0.0 && p.iou_thresh <= 1.0)) throw ConfigError("iou threshold must lie in (0,1]");
  MatchResult r;
  r.images.resize(images.size());
  parallel_for(images.size(), [&](std::size_t i) { r.images[i] = match_image(images[i], p); });
  return r;
}

struct CurvePoint {
  double fppi = 0.0;
  double miss_rate = 1.0;
  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct EvalCurve {
  std::vector<CurvePoint> points;  // fppi non-decreasing
  double lamr = 1.0;               // fraction
  std::size_t n_images = 0;
  std::size_t n_gt = 0;
};

inline constexpr double kMissRateFloor = 1e-10;

// Geometric mean of the miss rate at 9 FPPI references log-spaced over
// [1e-2, 1]; at each reference the point with the largest fppi not above it
// is used (the first point when none is). Returned as a percentage.
inline double log_average_miss_rate(const EvalCurve& curve) {
  if (curve.points.empty()) throw EmptyCurve("cannot average an empty curve");
  double log_sum = 0.0;
  for (int k = 0; k < 9; ++k) {
    const double ref = std::pow(10.0, -2.0 + 0.25 * k);
    double miss = curve.points.front().miss_rate;
    for (const auto& pt : curve.points) {
      if (pt.fppi <= ref) miss = pt.miss_rate;
      else break;
    }
    log_sum += std::log(std::max(miss, kMissRateFloor));
  }
  return 100.0 * std::exp(log_sum / 9.0);
}

// Sweeps the score threshold over +inf and every distinct detection score.
// Greedy matching in score order makes the matching at any threshold a
// prefix of the full matching, so one pass over `matches` suffices.
inline EvalCurve compute_det_curve(const std::vector<EvalImage>& images, const MatchResult& matches,
                                   const MatchParams& p = {}) {
  EvalCurve c;
  c.n_images = images.size();
  for (const auto& img : images) {
    for (const auto& g : img.gts) c.n_gt += gt_ignored(g, p) ? 0 : 1;
  }
  if (c.n_gt == 0) throw NoGroundTruth("no non-ignored ground truth boxes");

  std::vector<std::pair<double, bool>> scored;  // (score, is_tp)
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& out = matches.images.at(i).outcome;
    for (std::size_t d = 0; d < out.size(); ++d) {
      if (out[d] == DetOutcome::Ignored) continue;
      scored.emplace_back(images[i].dets[d].score, out[d] == DetOutcome::TruePositive);
    }
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  const double n_img = static_cast<double>(std::max<std::size_t>(c.n_images, 1));
  const double n_gt = static_cast<double>(c.n_gt);
  std::size_t tp = 0, fp = 0;
  auto emit = [&] {
    const CurvePoint pt{static_cast<double>(fp) / n_img, static_cast<double>(c.n_gt - tp) / n_gt};
    if (!c.points.empty() && c.points.back().fppi == pt.fppi) {
      c.points.back().miss_rate = std::min(c.points.back().miss_rate, pt.miss_rate);
    } else {
      c.points.push_back(pt);
    }
  };
  emit();  // threshold +inf
  for (std::size_t i = 0; i < scored.size();) {
    const double s = scored[i].first;
    for (; i < scored.size() && scored[i].first == s; ++i) (scored[i].second ? tp : fp)++;
    emit();
  }
  c.lamr = log_average_miss_rate(c) / 100.0;
  return c;
}

// Groups ground-truth and detection rows by image. The image set is
// `image_ids` when given, otherwise the union of ids in both inputs (sorted).
// Only person-labeled detections are evaluated.
inline std::vector<EvalImage> build_eval_images(const std::vector<Detection>& gts, const std::vector<Detection>& dets,
                                                std::vector<std::string> image_ids = {}) {
  std::map<std::string, EvalImage> by_id;
  if (!image_ids.empty()) {
    for (const auto& id : image_ids) by_id[id].image_id = id;
  }
  const bool closed = !image_ids.empty();
  auto slot = [&](const std::string& id) -> EvalImage& {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      if (closed) throw UnknownImage("evaluation row references unknown image '" + id + "'");
      it = by_id.emplace(id, EvalImage{id, {}, {}}).first;
    }
    return it->second;
  };
  for (const auto& g : gts) slot(g.image_id).gts.push_back({g.box, g.ignore});
  for (const auto& d : dets) {
    if (d.label != kPersonLabel) continue;
    slot(d.image_id).dets.push_back({d.box, d.score});
  }
  std::vector<EvalImage> out;
  out.reserve(by_id.size());
  for (auto& [id, img] : by_id) out.push_back(std::move(img));
  return out;
}

inline void write_curve_csv(const EvalCurve& c, std::ostream& out) {
  out << "fppi,miss_rate\n";
  out << std::setprecision(17);
  for (const auto& p : c.points) out << p.fppi << ',' << p.miss_rate << '\n';
}

inline json curve_summary(const EvalCurve& c) {
  return {{"lamr_percent", c.lamr * 100.0}, {"n_images", c.n_images}, {"n_gt", c.n_gt}};
}

}  // namespace wspd
