#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "detect.hpp"
#include "geometry.hpp"
#include "image_io.hpp"
#include "rng.hpp"

namespace wspd {

// Small self-contained corpus for demos and tests: textured gray images with
// bright upright "figures", a detector output file containing whole-figure,
// partial-figure, background, off-image and non-person detections, the true
// figure boxes (usable as refiner positives and as evaluation ground truth),
// a two-city table and a ready-to-run pipeline config.
struct SyntheticCorpus {
  std::filesystem::path dir;
  std::filesystem::path manifest;
  std::filesystem::path detections;
  std::filesystem::path ground_truth;
  std::filesystem::path cities;
  std::filesystem::path config;
  std::vector<ImageRecord> images;
  std::vector<Detection> dets;
  std::vector<Detection> figures;
};

struct SyntheticParams {
  std::size_t n_images = 20;
  int width = 160;
  int height = 120;
  std::uint64_t seed = 7;
};

inline SyntheticCorpus make_synthetic_corpus(const std::filesystem::path& dir, const SyntheticParams& p = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  SyntheticCorpus sc;
  sc.dir = dir;
  Rng rng(p.seed);
  const GeoPoint centers[2] = {{48.0, 2.0}, {52.0, 13.0}};
  const char* city_ids[2] = {"alpha", "beta"};

  for (std::size_t i = 0; i < p.n_images; ++i) {
    const std::string id = "img" + std::to_string(1000 + i);
    GrayImage img(p.width, p.height);
    const double phase = uniform_real(rng, 0.0, 6.28);
    for (int y = 0; y < p.height; ++y) {
      for (int x = 0; x < p.width; ++x) {
        const double v = 80.0 + 25.0 * std::sin(0.15 * x + phase) * std::cos(0.11 * y) +
                         uniform_real(rng, -12.0, 12.0);
        img.at(x, y) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
    // Figures: 16x48 silhouettes in disjoint vertical slots.
    const int n_fig = 1 + static_cast<int>(uniform_index(rng, 3));
    const int slot_w = p.width / 3;
    for (int f = 0; f < n_fig; ++f) {
      const int fx = f * slot_w + 4 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(slot_w - 24)));
      const int fy = 8 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(p.height - 64)));
      for (int y = 0; y < 48; ++y) {
        for (int x = 0; x < 16; ++x) {
          const bool head = y < 12 && std::hypot(x - 7.5, y - 6.0) <= 5.5;
          const bool body = y >= 12 && x >= 2 && x < 14;
          if (head || body) img.at(fx + x, fy + y) = static_cast<std::uint8_t>(head ? 230 : 200);
        }
      }
      const BBox full{fx - 1.0, fy - 1.0, 18.0, 50.0};
      sc.figures.push_back({id, kPersonLabel, 1.0, full, false});
      sc.dets.push_back({id, kPersonLabel, std::round(uniform_real(rng, 0.75, 1.0) * 1000) / 1000, full, false});
      sc.dets.push_back({id, kPersonLabel, std::round(uniform_real(rng, 0.6, 0.95) * 1000) / 1000,
                         BBox{full.x, full.y, full.w, 22.0}, false});
    }
    sc.dets.push_back({id, kPersonLabel, std::round(uniform_real(rng, 0.5, 1.0) * 1000) / 1000,
                       BBox{uniform_real(rng, 0, p.width - 30.0), uniform_real(rng, 0, p.height - 40.0), 24.0, 36.0},
                       false});
    sc.dets.push_back({id, "dog", 0.95, BBox{5.0, 5.0, 30.0, 20.0}, false});
    if (i % 5 == 0) sc.dets.push_back({id, kPersonLabel, 0.9, BBox{p.width - 10.0, 20.0, 16.0, 40.0}, false});
    if (i % 9 == 4) sc.dets.push_back({id, kPersonLabel, 0.99, BBox{p.width + 5.0, 10.0, 10.0, 10.0}, false});

    const std::string rel = "images/" + id + ".pgm";
    save_pgm(img, dir / rel);
    ImageRecord rec{id, rel, p.width, p.height, std::nullopt, 1500000000 + static_cast<std::int64_t>(i) * 3600,
                    std::nullopt};
    if (i % 7 != 6) {
      const GeoPoint& c = centers[i % 2];
      rec.geo = GeoPoint{c.lat + uniform_real(rng, -0.1, 0.1), c.lon + uniform_real(rng, -0.1, 0.1)};
    }
    sc.images.push_back(rec);
  }

  sc.manifest = dir / "manifest.jsonl";
  {
    std::ofstream out(sc.manifest);
    for (const auto& r : sc.images) {
      json j = {{"image_id", r.image_id}, {"path", r.path}, {"width", r.width}, {"height", r.height}};
      j["lat"] = r.geo ? json(r.geo->lat) : json(nullptr);
      j["lon"] = r.geo ? json(r.geo->lon) : json(nullptr);
      j["timestamp"] = *r.timestamp;
      out << j.dump() << '\n';
    }
  }
  sc.detections = dir / "detections.jsonl";
  {
    std::ofstream out(sc.detections);
    for (const auto& d : sc.dets) out << detection_to_json(d).dump() << '\n';
  }
  sc.ground_truth = dir / "figures.jsonl";
  {
    std::ofstream out(sc.ground_truth);
    for (const auto& d : sc.figures) out << detection_to_json(d).dump() << '\n';
  }
  sc.cities = dir / "cities.json";
  {
    json cities = json::array();
    for (int c = 0; c < 2; ++c) {
      cities.push_back({{"city_id", city_ids[c]}, {"lat", centers[c].lat}, {"lon", centers[c].lon}, {"radius_km", 50.0}});
    }
    std::ofstream out(sc.cities);
    out << cities.dump(2) << '\n';
  }
  sc.config = dir / "config.json";
  {
    const json cfg = {{"manifest", "manifest.jsonl"},
                      {"cities", "cities.json"},
                      {"min_city_count", 1},
                      {"detections", "detections.jsonl"},
                      {"score_threshold", kDefaultScoreThreshold},
                      {"features", "builtin"},
                      {"train", {{"positives", "figures.jsonl"}, {"lambda", 1e-3}, {"epochs", 20}, {"seed", 42},
                                 {"model_out", "out/model.json"}}},
                      {"output", {{"dataset", "out/dataset.json"}, {"run_report", "out/run_report.json"},
                                  {"run_manifest", "out/run_manifest.json"}}},
                      {"seed", 42}};
    std::ofstream out(sc.config);
    out << cfg.dump(2) << '\n';
  }
  return sc;
}

}  // namespace wspd
