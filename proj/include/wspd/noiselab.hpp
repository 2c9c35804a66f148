#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "detect.hpp"
#include "emit.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "rng.hpp"

namespace wspd {

struct NoiseSpec {
  double rate = 0.0;  // fraction of boxes to translate, [0, 1]
  std::uint64_t seed = 0;
  std::size_t max_tries = 100;

  void validate() const {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("noise rate must lie in [0,1]");
    if (max_tries < 1) throw ConfigError("max_tries must be at least 1");
  }
};

// Number of boxes selected for translation: round(rate * n), halves up.
inline std::size_t noise_count(double rate, std::size_t n) {
  // The epsilon absorbs representation error such as 0.3 * 10 = 3.0000000000000004
  // or 0.7 * 10 = 6.999999999999999.
  const double v = rate * static_cast<double>(n);
  return static_cast<std::size_t>(std::floor(v + 0.5 + 1e-9));
}

namespace detail {

inline bool disjoint_from_all(const BBox& c, const std::vector<BBox>& others) {
  for (const auto& o : others) {
    if (intersection_area(c, o) > 0.0) return false;
  }
  return true;
}

}  // namespace detail

// Moves `b` to a position of the same size that does not overlap any box in
// `gt_boxes` nor the box's own original position. Rejection sampling first,
// then an exhaustive scan of integer positions.
inline PersonBox relocate_box(const PersonBox& b, const std::vector<BBox>& gt_boxes, int img_w, int img_h, Rng& rng,
                              std::size_t max_tries = 100) {
  const double W = img_w, H = img_h;
  const double w = b.box.w, h = b.box.h;
  if (w > W || h > H) throw NoValidPlacement("box '" + b.box_id + "' is larger than its image");
  std::vector<BBox> blockers = gt_boxes;
  blockers.push_back(b.box);

  auto accept = [&](double x, double y) {
    PersonBox out = b;
    out.box = BBox{x, y, w, h};
    out.provenance = Provenance::NoiseTranslated;
    return out;
  };

  for (std::size_t t = 0; t < max_tries; ++t) {
    const BBox c{uniform_real(rng, 0.0, W - w), uniform_real(rng, 0.0, H - h), w, h};
    if (c.fits(W, H) && detail::disjoint_from_all(c, blockers)) return accept(c.x, c.y);
  }

  std::vector<std::pair<long, long>> valid;
  const auto max_x = static_cast<long>(std::floor(W - w));
  const auto max_y = static_cast<long>(std::floor(H - h));
  for (long y = 0; y <= max_y; ++y) {
    for (long x = 0; x <= max_x; ++x) {
      const BBox c{static_cast<double>(x), static_cast<double>(y), w, h};
      if (detail::disjoint_from_all(c, blockers)) valid.emplace_back(x, y);
    }
  }
  if (valid.empty()) throw NoValidPlacement("no free position for box '" + b.box_id + "'");
  const auto& [x, y] = valid[uniform_index(rng, valid.size())];
  return accept(static_cast<double>(x), static_cast<double>(y));
}

struct NoiseLogEntry {
  std::string box_id;
  BBox old_box;
  std::optional<BBox> new_box;  // empty: placement failed, box left unchanged
};

struct NoiseResult {
  Dataset dataset;
  std::vector<NoiseLogEntry> log;

  std::size_t moved() const {
    return static_cast<std::size_t>(std::count_if(log.begin(), log.end(), [](const auto& e) { return e.new_box.has_value(); }));
  }
  std::size_t failures() const { return log.size() - moved(); }
};

// Selects round(rate * N) boxes uniformly without replacement (seeded) and
// relocates each one. Relocation draws from a per-image stream derived from
// (seed, image_id), so images are independent of one another.
inline NoiseResult inject_noise(const Dataset& in, const NoiseSpec& spec) {
  spec.validate();
  NoiseResult res{in, {}};
  const std::size_t n = in.boxes.size();
  const std::size_t k = noise_count(spec.rate, n);
  if (k == 0) return res;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng pick(spec.seed);
  partial_shuffle(std::span<std::size_t>(order), k, pick);
  std::vector<char> selected(n, 0);
  for (std::size_t i = 0; i < k; ++i) selected[order[i]] = 1;

  const ImageIndex idx = index_images(in.images);
  std::map<std::string, std::vector<BBox>> originals;
  for (const auto& b : in.boxes) originals[b.image_id].push_back(b.box);
  std::map<std::string, Rng> streams;

  for (std::size_t i = 0; i < n; ++i) {
    if (!selected[i]) continue;
    const PersonBox& b = in.boxes[i];
    auto it = idx.find(b.image_id);
    if (it == idx.end()) throw UnknownImage("box '" + b.box_id + "' references unknown image");
    const ImageRecord& rec = in.images[it->second];
    auto [sit, fresh] = streams.try_emplace(b.image_id, derived_rng(spec.seed, b.image_id));
    NoiseLogEntry entry{b.box_id, b.box, std::nullopt};
    try {
      PersonBox moved = relocate_box(b, originals[b.image_id], rec.width, rec.height, sit->second, spec.max_tries);
      entry.new_box = moved.box;
      res.dataset.boxes[i] = std::move(moved);
    } catch (const NoValidPlacement&) {
    }
    res.log.push_back(std::move(entry));
  }
  return res;
}

inline void write_noise_log(const std::vector<NoiseLogEntry>& log, std::ostream& out) {
  for (const auto& e : log) {
    json j = {{"box_id", e.box_id}, {"old", box_to_json(e.old_box)}};
    j["new"] = e.new_box ? box_to_json(*e.new_box) : json("failed");
    out << j.dump() << '\n';
  }
}

inline void write_noise_log(const std::vector<NoiseLogEntry>& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write noise log " + path.string());
  write_noise_log(log, out);
}

}  // namespace wspd
