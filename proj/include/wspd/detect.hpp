#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "errors.hpp"
#include "geometry.hpp"

namespace wspd {

inline constexpr double kDefaultScoreThreshold = 0.8;
inline constexpr const char* kPersonLabel = "person";

struct Detection {
  std::string image_id;
  std::string label;
  double score = 0.0;
  BBox box;
  bool ignore = false;  // only meaningful for ground-truth rows
  friend bool operator==(const Detection&, const Detection&) = default;
};

enum class Provenance { Imported, Refined, NoiseTranslated };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::Imported: return "imported";
    case Provenance::Refined: return "refined";
    case Provenance::NoiseTranslated: return "noise-translated";
  }
  return "imported";
}

inline Provenance provenance_from_string(const std::string& s) {
  if (s == "imported") return Provenance::Imported;
  if (s == "refined") return Provenance::Refined;
  if (s == "noise-translated") return Provenance::NoiseTranslated;
  throw ParseError(0, "unknown provenance '" + s + "'");
}

struct PersonBox {
  std::string box_id;
  std::string image_id;
  BBox box;
  double detector_score = 0.0;
  Provenance provenance = Provenance::Imported;
  friend bool operator==(const PersonBox&, const PersonBox&) = default;
};

// image_id -> position in the record sequence.
using ImageIndex = std::unordered_map<std::string, std::size_t>;

inline ImageIndex index_images(const std::vector<ImageRecord>& records) {
  ImageIndex idx;
  idx.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) idx.emplace(records[i].image_id, i);
  return idx;
}

inline BBox box_from_json(const json& j, std::size_t line) {
  if (!j.is_array() || j.size() != 4) {
    throw ParseError(line, "box must be an array [x,y,w,h]");
  }
  for (const auto& v : j) {
    if (!v.is_number()) throw ParseError(line, "box entries must be numbers");
  }
  BBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!b.valid()) throw ParseError(line, "box must have finite coordinates and w,h > 0");
  return b;
}

inline json box_to_json(const BBox& b) { return json::array({b.x, b.y, b.w, b.h}); }

// One row of the detector-adapter JSONL contract:
// {image_id, label, score, box:[x,y,w,h]} with optional `ignore` (ground truth).
// Ground-truth rows may omit label and score.
inline Detection detection_from_json(const json& j, std::size_t line,
                                     bool ground_truth = false) {
  if (!j.is_object()) throw ParseError(line, "expected a JSON object");
  Detection d;
  try {
    d.image_id = j.at("image_id").get<std::string>();
    if (ground_truth) {
      d.label = j.value("label", std::string(kPersonLabel));
      d.score = j.value("score", 1.0);
      d.ignore = j.value("ignore", false);
    } else {
      d.label = j.at("label").get<std::string>();
      d.score = j.at("score").get<double>();
    }
    d.box = box_from_json(j.at("box"), line);
  } catch (const json::exception& e) {
    throw ParseError(line, e.what());
  }
  if (!(d.score >= 0.0 && d.score <= 1.0)) {
    throw ParseError(line, "score out of range [0,1]");
  }
  return d;
}

inline json detection_to_json(const Detection& d) {
  json j = {{"image_id", d.image_id}, {"label", d.label}, {"score", d.score},
            {"box", box_to_json(d.box)}};
  if (d.ignore) j["ignore"] = true;
  return j;
}

inline std::vector<Detection> parse_detection_rows(std::istream& in, bool ground_truth = false) {
  std::vector<Detection> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    out.push_back(detection_from_json(j, line_no, ground_truth));
  }
  return out;
}

inline std::vector<Detection> load_detection_rows(const std::filesystem::path& path,
                                                  bool ground_truth = false) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open detection file " + path.string());
  return parse_detection_rows(in, ground_truth);
}

struct ImportResult {
  std::vector<Detection> detections;
  std::size_t rows = 0;
  std::size_t collapsed = 0;  // dropped: entirely outside their image
};

// Validates rows against the manifest and clamps each box to its image.
inline ImportResult import_detections(std::vector<Detection> rows,
                                      const std::vector<ImageRecord>& manifest) {
  const ImageIndex idx = index_images(manifest);
  ImportResult res;
  res.rows = rows.size();
  for (auto& d : rows) {
    auto it = idx.find(d.image_id);
    if (it == idx.end()) throw UnknownImage("detection references unknown image '" + d.image_id + "'");
    const ImageRecord& rec = manifest[it->second];
    try {
      d.box = clamp_to_image(d.box, rec.width, rec.height);
    } catch (const ClampCollapsed&) {
      ++res.collapsed;
      continue;
    }
    res.detections.push_back(std::move(d));
  }
  return res;
}

inline ImportResult import_detections(const std::filesystem::path& path,
                                      const std::vector<ImageRecord>& manifest) {
  return import_detections(load_detection_rows(path), manifest);
}

// Keeps person detections with score >= threshold (inclusive). Box ids are
// "{image_id}#{k}", k the per-image rank by descending score with ties broken
// by (x, y, w, h). Output is ordered by image_id, then k.
inline std::vector<PersonBox> select_person_detections(const std::vector<Detection>& dets,
                                                       double threshold = kDefaultScoreThreshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ConfigError("score threshold must lie in [0,1]");
  }
  std::map<std::string, std::vector<const Detection*>> per_image;
  for (const auto& d : dets) {
    if (d.label == kPersonLabel && d.score >= threshold) per_image[d.image_id].push_back(&d);
  }
  std::vector<PersonBox> out;
  for (auto& [image_id, list] : per_image) {
    std::sort(list.begin(), list.end(), [](const Detection* a, const Detection* b) {
      if (a->score != b->score) return a->score > b->score;
      return a->box < b->box;
    });
    for (std::size_t k = 0; k < list.size(); ++k) {
      out.push_back(PersonBox{image_id + "#" + std::to_string(k), image_id, list[k]->box,
                              list[k]->score, Provenance::Imported});
    }
  }
  return out;
}

}  // namespace wspd
