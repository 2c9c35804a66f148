#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"

namespace wspd {

using json = nlohmann::json;

struct GeoPoint {
  double lat = 0.0;  // degrees, [-90, 90]
  double lon = 0.0;  // degrees, [-180, 180]
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

struct ImageRecord {
  std::string image_id;
  std::string path;
  int width = 0;
  int height = 0;
  std::optional<GeoPoint> geo;
  std::optional<std::int64_t> timestamp;  // UTC seconds
  std::optional<std::string> source_city;
  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct CityDef {
  std::string city_id;
  GeoPoint center;
  double assignment_radius_km = 50.0;
};

enum class ManifestFormat { Jsonl, Csv };

inline ManifestFormat manifest_format_from_string(const std::string& s) {
  if (s == "jsonl") return ManifestFormat::Jsonl;
  if (s == "csv") return ManifestFormat::Csv;
  throw ConfigError("unknown manifest format '" + s + "' (expected jsonl or csv)");
}

inline ManifestFormat manifest_format_for_path(const std::filesystem::path& p) {
  return p.extension() == ".csv" ? ManifestFormat::Csv : ManifestFormat::Jsonl;
}

namespace detail {

inline bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

inline void validate_record(const ImageRecord& r, std::size_t line) {
  if (r.image_id.empty()) throw ParseError(line, "empty image_id");
  if (r.width <= 0) throw ParseError(line, "width must be positive");
  if (r.height <= 0) throw ParseError(line, "height must be positive");
  if (r.geo) {
    if (!std::isfinite(r.geo->lat) || r.geo->lat < -90.0 || r.geo->lat > 90.0) {
      throw ParseError(line, "latitude out of range");
    }
    if (!std::isfinite(r.geo->lon) || r.geo->lon < -180.0 || r.geo->lon > 180.0) {
      throw ParseError(line, "longitude out of range");
    }
  }
}

inline void set_geo(ImageRecord& r, std::optional<double> lat,
                    std::optional<double> lon, std::size_t line) {
  if (lat.has_value() != lon.has_value()) {
    throw ParseError(line, "geo-tag needs both lat and lon");
  }
  if (lat) r.geo = GeoPoint{*lat, *lon};
}

inline ImageRecord record_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) throw ParseError(line, "expected a JSON object");
  ImageRecord r;
  auto require = [&](const char* key) -> const json& {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
      throw ParseError(line, std::string("missing field '") + key + "'");
    }
    return *it;
  };
  auto optional_number = [&](const char* key) -> std::optional<double> {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) {
      throw ParseError(line, std::string("field '") + key + "' must be a number");
    }
    return it->get<double>();
  };
  const json& id = require("image_id");
  const json& path = require("path");
  const json& w = require("width");
  const json& h = require("height");
  if (!id.is_string()) throw ParseError(line, "image_id must be a string");
  if (!path.is_string()) throw ParseError(line, "path must be a string");
  if (!w.is_number_integer()) throw ParseError(line, "width must be an integer");
  if (!h.is_number_integer()) throw ParseError(line, "height must be an integer");
  r.image_id = id.get<std::string>();
  r.path = path.get<std::string>();
  r.width = w.get<int>();
  r.height = h.get<int>();
  set_geo(r, optional_number("lat"), optional_number("lon"), line);
  if (auto it = j.find("timestamp"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw ParseError(line, "timestamp must be an integer");
    r.timestamp = it->get<std::int64_t>();
  }
  return r;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  return fields;
}

template <typename T>
std::optional<T> parse_csv_number(const std::string& field, std::size_t line,
                                  const char* name) {
  if (field.empty()) return std::nullopt;
  std::istringstream in(field);
  T v{};
  in >> v;
  if (in.fail() || !in.eof()) {
    throw ParseError(line, std::string("field '") + name + "' is not a valid number");
  }
  return v;
}

}  // namespace detail

inline constexpr const char* kCsvManifestHeader =
    "image_id,path,width,height,lat,lon,timestamp";

// Parses a manifest stream. Row order is preserved; blank lines are skipped.
inline std::vector<ImageRecord> parse_manifest(std::istream& in, ManifestFormat format) {
  std::vector<ImageRecord> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    ImageRecord r;
    if (format == ManifestFormat::Jsonl) {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
      }
      r = detail::record_from_json(j, line_no);
    } else {
      if (!header_seen) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line != kCsvManifestHeader) {
          throw ParseError(line_no, std::string("expected header '") +
                                        kCsvManifestHeader + "'");
        }
        header_seen = true;
        continue;
      }
      const auto f = detail::split_csv_line(line);
      if (f.size() != 7) throw ParseError(line_no, "expected 7 fields");
      r.image_id = f[0];
      r.path = f[1];
      auto w = detail::parse_csv_number<long>(f[2], line_no, "width");
      auto h = detail::parse_csv_number<long>(f[3], line_no, "height");
      if (!w || !h) throw ParseError(line_no, "width and height are required");
      r.width = static_cast<int>(*w);
      r.height = static_cast<int>(*h);
      detail::set_geo(r, detail::parse_csv_number<double>(f[4], line_no, "lat"),
                      detail::parse_csv_number<double>(f[5], line_no, "lon"), line_no);
      r.timestamp = detail::parse_csv_number<std::int64_t>(f[6], line_no, "timestamp");
    }
    detail::validate_record(r, line_no);
    if (!seen.insert(r.image_id).second) {
      throw DuplicateId("duplicate image_id '" + r.image_id + "' at line " +
                        std::to_string(line_no));
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<ImageRecord> load_manifest(const std::filesystem::path& path,
                                              ManifestFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  return parse_manifest(in, format);
}

inline constexpr double kEarthRadiusKm = 6371.0;

inline double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double phi1 = a.lat * deg;
  const double phi2 = b.lat * deg;
  const double dphi = (b.lat - a.lat) * deg;
  const double dlambda = (b.lon - a.lon) * deg;
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  const double h = std::clamp(s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::atan2(std::sqrt(h), std::sqrt(1.0 - h));
}

// Nearest city whose center lies within its own radius; ties go to the
// lexicographically smaller city_id.
inline std::optional<std::string> assign_city(const ImageRecord& r,
                                              const std::vector<CityDef>& cities) {
  if (!r.geo) throw MissingGeoTag("image '" + r.image_id + "' has no geo-tag");
  const CityDef* best = nullptr;
  double best_d = 0.0;
  for (const auto& c : cities) {
    const double d = haversine_km(*r.geo, c.center);
    if (d > c.assignment_radius_km) continue;
    if (!best || d < best_d || (d == best_d && c.city_id < best->city_id)) {
      best = &c;
      best_d = d;
    }
  }
  if (!best) return std::nullopt;
  return best->city_id;
}

inline constexpr std::size_t kDefaultMinCityCount = 100000;
inline constexpr double kDefaultMinSeparationKm = 200.0;

struct CityStatus {
  std::size_t count = 0;
  bool kept = false;
};

struct CityFilterReport {
  std::map<std::string, CityStatus> cities;
  std::size_t untagged = 0;    // no geo-tag; not part of city filtering
  std::size_t unassigned = 0;  // geo-tagged but outside every city radius

  json to_json() const {
    json j = json::object();
    for (const auto& [id, s] : cities) j[id] = {{"count", s.count}, {"kept", s.kept}};
    return j;
  }
};

struct CityFilterResult {
  std::vector<ImageRecord> kept;  // records of kept cities, source_city set
  std::vector<ImageRecord> untagged;
  CityFilterReport report;
};

// Drops cities with fewer than `min_count` assigned records ("fewer than" is
// strict: a city at exactly min_count is kept).
inline CityFilterResult filter_cities(const std::vector<ImageRecord>& records,
                                      const std::vector<CityDef>& cities,
                                      std::size_t min_count = kDefaultMinCityCount) {
  CityFilterResult res;
  for (const auto& c : cities) res.report.cities[c.city_id] = CityStatus{};
  std::vector<std::optional<std::string>> assigned(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].geo) {
      ++res.report.untagged;
      res.untagged.push_back(records[i]);
      continue;
    }
    assigned[i] = assign_city(records[i], cities);
    if (assigned[i]) {
      ++res.report.cities[*assigned[i]].count;
    } else {
      ++res.report.unassigned;
    }
  }
  for (auto& [id, s] : res.report.cities) s.kept = s.count >= min_count;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!assigned[i] || !res.report.cities[*assigned[i]].kept) continue;
    ImageRecord r = records[i];
    r.source_city = *assigned[i];
    res.kept.push_back(std::move(r));
  }
  return res;
}

struct SeparationViolation {
  std::string a;
  std::string b;
  double distance_km = 0.0;
};

// Unordered city pairs closer than `min_km`; a pair at exactly min_km passes.
inline std::vector<SeparationViolation> validate_separation(
    const std::vector<CityDef>& cities, double min_km = kDefaultMinSeparationKm) {
  std::vector<SeparationViolation> out;
  for (std::size_t i = 0; i < cities.size(); ++i) {
    for (std::size_t j = i + 1; j < cities.size(); ++j) {
      const double d = haversine_km(cities[i].center, cities[j].center);
      if (d < min_km) out.push_back({cities[i].city_id, cities[j].city_id, d});
    }
  }
  return out;
}

inline std::vector<CityDef> parse_cities(const json& j) {
  if (!j.is_array()) throw ParseError(0, "city table must be a JSON array");
  std::vector<CityDef> out;
  std::set<std::string> seen;
  std::size_t idx = 0;
  for (const auto& c : j) {
    ++idx;
    try {
      CityDef d;
      d.city_id = c.at("city_id").get<std::string>();
      d.center = GeoPoint{c.at("lat").get<double>(), c.at("lon").get<double>()};
      d.assignment_radius_km = c.value("radius_km", 50.0);
      if (d.assignment_radius_km <= 0.0) throw ParseError(idx, "radius_km must be positive");
      if (std::abs(d.center.lat) > 90.0 || std::abs(d.center.lon) > 180.0) {
        throw ParseError(idx, "city center out of range");
      }
      if (!seen.insert(d.city_id).second) {
        throw DuplicateId("duplicate city_id '" + d.city_id + "'");
      }
      out.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw ParseError(idx, std::string("bad city entry: ") + e.what());
    }
  }
  return out;
}

inline std::vector<CityDef> load_cities(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open city table " + path.string());
  try {
    return parse_cities(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError(0, std::string("invalid city table JSON: ") + e.what());
  }
}

}  // namespace wspd
