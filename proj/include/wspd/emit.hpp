#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "detect.hpp"
#include "errors.hpp"
#include "image_io.hpp"

namespace wspd {

// A weakly annotated dataset: the images and their person boxes.
struct Dataset {
  std::vector<ImageRecord> images;
  std::vector<PersonBox> boxes;
};

struct CityCounts {
  std::size_t images = 0;
  std::size_t boxes = 0;
  friend bool operator==(const CityCounts&, const CityCounts&) = default;
};

struct DatasetStats {
  std::size_t n_original_images = 0;  // images with at least one box
  std::size_t n_boxes = 0;
  std::size_t n_classes = 0;  // person + background, 0 when there are no boxes
  std::map<std::string, CityCounts> per_city;

  friend bool operator==(const DatasetStats&, const DatasetStats&) = default;

  json to_json() const {
    json cities = json::object();
    for (const auto& [id, c] : per_city) cities[id] = {{"images", c.images}, {"boxes", c.boxes}};
    return {{"n_original_images", n_original_images}, {"n_boxes", n_boxes},
            {"n_classes", n_classes}, {"per_city", cities}};
  }
};

inline DatasetStats dataset_stats(const std::vector<PersonBox>& boxes,
                                  const std::vector<ImageRecord>& images) {
  const ImageIndex idx = index_images(images);
  std::map<std::string, std::size_t> per_image;
  for (const auto& b : boxes) {
    if (!idx.count(b.image_id)) throw UnknownImage("box '" + b.box_id + "' references unknown image");
    ++per_image[b.image_id];
  }
  DatasetStats s;
  s.n_original_images = per_image.size();
  s.n_boxes = boxes.size();
  s.n_classes = boxes.empty() ? 0 : 2;
  for (const auto& [image_id, n] : per_image) {
    const auto& rec = images[idx.at(image_id)];
    if (!rec.source_city) continue;
    auto& c = s.per_city[*rec.source_city];
    ++c.images;
    c.boxes += n;
  }
  return s;
}

inline constexpr int kPersonCategoryId = 1;

// COCO-style document. Images keep manifest order and are omitted when they
// carry no boxes; annotations keep input order and use box_id as their id.
inline json dataset_to_json(const std::vector<PersonBox>& boxes, const std::vector<ImageRecord>& images) {
  const ImageIndex idx = index_images(images);
  std::set<std::string> populated;
  for (const auto& b : boxes) {
    if (!idx.count(b.image_id)) throw UnknownImage("box '" + b.box_id + "' references unknown image");
    populated.insert(b.image_id);
  }
  json jimages = json::array();
  for (const auto& r : images) {
    if (!populated.count(r.image_id)) continue;
    json extra = json::object();
    extra["lat"] = r.geo ? json(r.geo->lat) : json(nullptr);
    extra["lon"] = r.geo ? json(r.geo->lon) : json(nullptr);
    extra["timestamp"] = r.timestamp ? json(*r.timestamp) : json(nullptr);
    extra["city"] = r.source_city ? json(*r.source_city) : json(nullptr);
    jimages.push_back({{"id", r.image_id}, {"file_name", r.path}, {"width", r.width},
                       {"height", r.height}, {"extra", extra}});
  }
  json jann = json::array();
  for (const auto& b : boxes) {
    jann.push_back({{"id", b.box_id}, {"image_id", b.image_id}, {"category_id", kPersonCategoryId},
                    {"bbox", box_to_json(b.box)}, {"area", b.box.area()},
                    {"score", b.detector_score}, {"provenance", to_string(b.provenance)}});
  }
  return {{"info", {{"description", "weakly supervised person dataset"}, {"version", 1}}},
          {"categories", json::array({{{"id", kPersonCategoryId}, {"name", kPersonLabel}}})},
          {"images", jimages},
          {"annotations", jann}};
}

inline Dataset dataset_from_json(const json& j) {
  Dataset ds;
  try {
    std::set<std::string> ids;
    for (const auto& im : j.at("images")) {
      ImageRecord r;
      r.image_id = im.at("id").get<std::string>();
      r.path = im.value("file_name", std::string());
      r.width = im.at("width").get<int>();
      r.height = im.at("height").get<int>();
      if (im.contains("extra")) {
        const auto& e = im["extra"];
        if (e.contains("lat") && !e["lat"].is_null() && e.contains("lon") && !e["lon"].is_null()) {
          r.geo = GeoPoint{e["lat"].get<double>(), e["lon"].get<double>()};
        }
        if (e.contains("timestamp") && !e["timestamp"].is_null()) r.timestamp = e["timestamp"].get<std::int64_t>();
        if (e.contains("city") && !e["city"].is_null()) r.source_city = e["city"].get<std::string>();
      }
      if (!ids.insert(r.image_id).second) throw DuplicateId("duplicate image id '" + r.image_id + "'");
      ds.images.push_back(std::move(r));
    }
    std::set<std::string> box_ids;
    std::size_t n = 0;
    for (const auto& a : j.at("annotations")) {
      ++n;
      PersonBox b;
      b.box_id = a.at("id").get<std::string>();
      b.image_id = a.at("image_id").get<std::string>();
      b.box = box_from_json(a.at("bbox"), n);
      b.detector_score = a.value("score", 1.0);
      b.provenance = provenance_from_string(a.value("provenance", std::string("imported")));
      if (!ids.count(b.image_id)) throw UnknownImage("annotation '" + b.box_id + "' references unknown image");
      if (!box_ids.insert(b.box_id).second) throw DuplicateId("duplicate annotation id '" + b.box_id + "'");
      ds.boxes.push_back(std::move(b));
    }
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("bad dataset document: ") + e.what());
  }
  return ds;
}

inline void write_json_file(const json& j, const std::filesystem::path& path, int indent = 1) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(indent) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

inline Dataset load_dataset(const std::filesystem::path& path) { return dataset_from_json(read_json_file(path)); }

// Stats file path written next to a dataset document: "<stem>.stats.json".
inline std::filesystem::path stats_path_for(const std::filesystem::path& out_path) {
  auto p = out_path;
  p.replace_extension(".stats.json");
  return p;
}

struct EmitOptions {
  std::filesystem::path stats_path;   // default: stats_path_for(out_path)
  std::filesystem::path crops_dir;    // when set, one PNG per box is written here
  ImageStore* image_store = nullptr;  // required for crop export
};

inline DatasetStats emit_dataset(const std::vector<PersonBox>& boxes, const std::vector<ImageRecord>& images,
                                 const std::filesystem::path& out_path, const EmitOptions& opts = {}) {
  const DatasetStats stats = dataset_stats(boxes, images);
  write_json_file(dataset_to_json(boxes, images), out_path);
  write_json_file(stats.to_json(), opts.stats_path.empty() ? stats_path_for(out_path) : opts.stats_path, 2);
  if (!opts.crops_dir.empty()) {
    if (!opts.image_store) throw ConfigError("crop export needs an image store");
    std::filesystem::create_directories(opts.crops_dir);
    const ImageIndex idx = index_images(images);
    for (const auto& b : boxes) {
      const auto img = opts.image_store->get(images[idx.at(b.image_id)].path);
      std::string name = b.box_id;
      for (char& c : name) {
        if (c == '/' || c == '#' || c == '\\') c = '_';
      }
      save_png(crop_region(*img, b.box), opts.crops_dir / (name + ".png"));
    }
  }
  return stats;
}

}  // namespace wspd
