#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "audit.hpp"
#include "corpus.hpp"
#include "detect.hpp"
#include "emit.hpp"
#include "errors.hpp"
#include "eval.hpp"
#include "image_io.hpp"
#include "noiselab.hpp"
#include "refine.hpp"

namespace wspd {

namespace fs = std::filesystem;

// How the refiner is obtained when no model file is given.
struct TrainSpec {
  TrainParams params;
  fs::path positives;          // detection-format JSONL of whole-body boxes
  std::size_t negatives_per_image = 4;
  fs::path positive_features;  // alternative: precomputed feature rows
  fs::path negative_features;
  fs::path model_out;
};

struct EvalSpec {
  fs::path ground_truth;
  fs::path detections;
  MatchParams match;
  fs::path curve_csv;
  fs::path summary;
};

struct AuditSpec {
  std::size_t n = kDefaultAuditSampleSize;
  std::uint64_t seed = 0;
  fs::path session_out;
};

struct NoiseStageSpec {
  NoiseSpec spec;
  fs::path out;
  fs::path log;
};

struct PipelineConfig {
  fs::path manifest;
  ManifestFormat manifest_format = ManifestFormat::Jsonl;
  fs::path image_root;
  fs::path cities;
  std::size_t min_city_count = kDefaultMinCityCount;
  double min_separation_km = kDefaultMinSeparationKm;
  bool keep_untagged = true;
  fs::path detections;
  double score_threshold = kDefaultScoreThreshold;
  std::string features = "builtin";  // "builtin" or a feature-file path
  fs::path model;
  std::optional<TrainSpec> train;
  fs::path dataset_out;
  fs::path stats_out;
  fs::path run_report;
  fs::path run_manifest;
  fs::path crops_dir;
  std::optional<NoiseStageSpec> noise;
  std::optional<EvalSpec> eval;
  std::optional<AuditSpec> audit;
  std::uint64_t seed = 42;
};

namespace detail {

inline fs::path path_field(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j[key].is_null()) return {};
  fs::path p(j[key].get<std::string>());
  return p.is_relative() && !base.empty() ? base / p : p;
}

template <typename T>
T field(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

}  // namespace detail

// Relative paths inside the document resolve against `base` (normally the
// config file's directory).
inline PipelineConfig config_from_json(const json& j, const fs::path& base = {}) {
  using detail::field;
  using detail::path_field;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  PipelineConfig c;
  c.manifest = path_field(j, "manifest", base);
  c.manifest_format = j.contains("manifest_format")
                          ? manifest_format_from_string(j["manifest_format"].get<std::string>())
                          : manifest_format_for_path(c.manifest);
  c.image_root = path_field(j, "image_root", base);
  if (c.image_root.empty()) c.image_root = c.manifest.parent_path();
  c.cities = path_field(j, "cities", base);
  c.min_city_count = field<std::size_t>(j, "min_city_count", c.min_city_count);
  c.min_separation_km = field<double>(j, "min_separation_km", c.min_separation_km);
  c.keep_untagged = field<bool>(j, "keep_untagged", c.keep_untagged);
  c.detections = path_field(j, "detections", base);
  c.score_threshold = field<double>(j, "score_threshold", c.score_threshold);
  c.features = field<std::string>(j, "features", c.features);
  if (c.features != "builtin") c.features = path_field(j, "features", base).string();
  c.model = path_field(j, "model", base);
  c.seed = field<std::uint64_t>(j, "seed", c.seed);
  if (j.contains("train") && !j["train"].is_null()) {
    const json& t = j["train"];
    TrainSpec ts;
    ts.params.lambda = field<double>(t, "lambda", ts.params.lambda);
    ts.params.epochs = field<std::size_t>(t, "epochs", ts.params.epochs);
    ts.params.seed = field<std::uint64_t>(t, "seed", c.seed);
    ts.positives = path_field(t, "positives", base);
    ts.negatives_per_image = field<std::size_t>(t, "negatives_per_image", ts.negatives_per_image);
    ts.positive_features = path_field(t, "positive_features", base);
    ts.negative_features = path_field(t, "negative_features", base);
    ts.model_out = path_field(t, "model_out", base);
    c.train = ts;
  }
  const json out = j.value("output", json::object());
  c.dataset_out = path_field(out, "dataset", base);
  c.stats_out = path_field(out, "stats", base);
  c.run_report = path_field(out, "run_report", base);
  c.run_manifest = path_field(out, "run_manifest", base);
  c.crops_dir = path_field(out, "crops_dir", base);
  if (j.contains("noise") && !j["noise"].is_null()) {
    const json& n = j["noise"];
    NoiseStageSpec ns;
    ns.spec.rate = field<double>(n, "rate", 0.0);
    ns.spec.seed = field<std::uint64_t>(n, "seed", c.seed);
    ns.spec.max_tries = field<std::size_t>(n, "max_tries", ns.spec.max_tries);
    ns.out = path_field(n, "out", base);
    ns.log = path_field(n, "log", base);
    c.noise = ns;
  }
  if (j.contains("eval") && !j["eval"].is_null()) {
    const json& e = j["eval"];
    EvalSpec es;
    es.ground_truth = path_field(e, "ground_truth", base);
    es.detections = path_field(e, "detections", base);
    es.match.iou_thresh = field<double>(e, "iou_thresh", es.match.iou_thresh);
    es.match.min_height = field<double>(e, "min_height", es.match.min_height);
    es.curve_csv = path_field(e, "curve_csv", base);
    es.summary = path_field(e, "summary", base);
    c.eval = es;
  }
  if (j.contains("audit") && !j["audit"].is_null()) {
    const json& a = j["audit"];
    AuditSpec as;
    as.n = field<std::size_t>(a, "n", as.n);
    as.seed = field<std::uint64_t>(a, "seed", c.seed);
    as.session_out = path_field(a, "session_out", base);
    c.audit = as;
  }
  return c;
}

inline PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return config_from_json(j, path.parent_path());
}

// Checks value ranges and that every referenced input exists. Errors name the
// offending field.
inline void validate_config(const PipelineConfig& c) {
  auto need_file = [](const fs::path& p, const std::string& field) {
    if (p.empty()) throw ConfigError(field + ": required");
    if (!fs::exists(p)) throw ConfigError(field + ": file not found: " + p.string());
  };
  auto optional_file = [&](const fs::path& p, const std::string& field) {
    if (!p.empty()) need_file(p, field);
  };
  need_file(c.manifest, "manifest");
  optional_file(c.cities, "cities");
  need_file(c.detections, "detections");
  if (!(c.score_threshold >= 0.0 && c.score_threshold <= 1.0)) {
    throw ConfigError("score_threshold: must lie in [0,1]");
  }
  if (!(c.min_separation_km >= 0.0)) throw ConfigError("min_separation_km: must be >= 0");
  if (c.features != "builtin") need_file(c.features, "features");
  if (c.model.empty() && !c.train) throw ConfigError("model: required unless a train section is given");
  if (!c.model.empty() && !c.train) need_file(c.model, "model");
  if (c.train) {
    if (!c.train->positive_features.empty() || !c.train->negative_features.empty()) {
      need_file(c.train->positive_features, "train.positive_features");
      need_file(c.train->negative_features, "train.negative_features");
    } else {
      need_file(c.train->positives, "train.positives");
    }
    if (!(c.train->params.lambda > 0.0)) throw ConfigError("train.lambda: must be positive");
  }
  if (c.dataset_out.empty()) throw ConfigError("output.dataset: required");
  if (c.noise) {
    if (!(c.noise->spec.rate >= 0.0 && c.noise->spec.rate <= 1.0)) throw ConfigError("noise.rate: must lie in [0,1]");
    if (c.noise->spec.max_tries < 1) throw ConfigError("noise.max_tries: must be >= 1");
    if (c.noise->out.empty()) throw ConfigError("noise.out: required");
  }
  if (c.eval) {
    need_file(c.eval->ground_truth, "eval.ground_truth");
    need_file(c.eval->detections, "eval.detections");
    if (!(c.eval->match.iou_thresh > 0.0 && c.eval->match.iou_thresh <= 1.0)) {
      throw ConfigError("eval.iou_thresh: must lie in (0,1]");
    }
  }
  if (c.audit && c.audit->session_out.empty()) throw ConfigError("audit.session_out: required");
}

// A stage failed; `stage()` names it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error("StageError", stage + ": " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct StageReport {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t dropped = 0;
  std::vector<std::string> warnings;
};

struct RunReport {
  std::vector<std::pair<std::string, StageReport>> stages;  // execution order
  DatasetStats stats;
  std::optional<double> lamr_percent;
  std::optional<std::string> audit_session;

  const StageReport& stage(const std::string& name) const {
    for (const auto& [n, s] : stages) {
      if (n == name) return s;
    }
    throw std::out_of_range("no stage " + name);
  }
  bool has_stage(const std::string& name) const {
    for (const auto& [n, s] : stages) {
      if (n == name) return true;
    }
    return false;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [name, s] : stages) {
      j[name] = {{"in", s.in}, {"out", s.out}, {"dropped", s.dropped}, {"warnings", s.warnings}};
    }
    return j;
  }
};

namespace detail {

// Outputs are written as "<path>.partial" and renamed once the run succeeds.
class PartialOutputs {
 public:
  fs::path stage(const fs::path& final_path) {
    if (final_path.empty()) return {};
    if (final_path.has_parent_path()) fs::create_directories(final_path.parent_path());
    fs::path p = final_path;
    p += ".partial";
    pending_.emplace_back(p, final_path);
    return p;
  }
  void commit() {
    for (const auto& [from, to] : pending_) {
      if (fs::exists(from)) fs::rename(from, to);
    }
    pending_.clear();
  }

 private:
  std::vector<std::pair<fs::path, fs::path>> pending_;
};

template <typename Fn>
auto run_stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

inline std::vector<FeatureVector> features_of(const std::vector<PersonBox>& boxes, FeatureSource& src) {
  std::vector<FeatureVector> out(boxes.size());
  parallel_for(boxes.size(), [&](std::size_t i) { out[i] = src.features(boxes[i]); });
  return out;
}

}  // namespace detail

// Builds refiner training data from annotated positive boxes: their crops are
// positives, seeded random background crops on the same images are negatives.
inline LinearModel train_refiner_from_boxes(const std::vector<ImageRecord>& images,
                                            const std::vector<Detection>& positives,
                                            const std::vector<PersonBox>& known_persons, ImageStore& store,
                                            const TrainSpec& spec) {
  const ImageIndex idx = index_images(images);
  std::vector<PersonBox> pos_boxes, neg_boxes;
  std::map<std::string, std::vector<BBox>> persons_on;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    const auto& d = positives[i];
    if (!idx.count(d.image_id)) throw UnknownImage("positive box references unknown image '" + d.image_id + "'");
    const auto& rec = images[idx.at(d.image_id)];
    BBox b = clamp_to_image(d.box, rec.width, rec.height);
    pos_boxes.push_back({"pos#" + std::to_string(i), d.image_id, b, 1.0, Provenance::Imported});
    persons_on[d.image_id].push_back(b);
  }
  for (const auto& p : known_persons) persons_on[p.image_id].push_back(p.box);
  std::size_t k = 0;
  for (const auto& [image_id, persons] : persons_on) {
    if (!idx.count(image_id)) continue;
    Rng rng = derived_rng(spec.params.seed, image_id);
    for (const auto& c : sample_negative_crops(images[idx.at(image_id)], persons, spec.negatives_per_image, rng)) {
      neg_boxes.push_back({"neg#" + std::to_string(k++), image_id, c, 0.0, Provenance::Imported});
    }
  }
  BuiltinFeatureSource src(images, store);
  return train_svm(detail::features_of(pos_boxes, src), detail::features_of(neg_boxes, src), spec.params);
}

inline std::vector<FeatureVector> feature_rows_as_vectors(const fs::path& path) {
  std::vector<FeatureVector> out;
  for (auto& [id, f] : load_feature_rows(path)) out.push_back(std::move(f));
  return out;
}

// corpus -> city filter -> detection import + selection -> (training) ->
// refinement -> emission, then the optional noise / eval / audit stages.
// Throws ConfigError for invalid configs and StageError for stage failures;
// on failure any outputs already written keep their ".partial" suffix.
inline RunReport run_pipeline(const PipelineConfig& cfg) {
  validate_config(cfg);
  RunReport report;
  detail::PartialOutputs outputs;
  ImageStore store(cfg.image_root);

  // corpus
  std::vector<ImageRecord> records = detail::run_stage("corpus", [&] {
    return load_manifest(cfg.manifest, cfg.manifest_format);
  });
  report.stages.push_back({"corpus", {records.size(), records.size(), 0, {}}});

  // city filter
  std::vector<ImageRecord> corpus = detail::run_stage("city_filter", [&] {
    StageReport s;
    s.in = records.size();
    std::vector<ImageRecord> kept;
    if (cfg.cities.empty()) {
      kept = records;
      s.warnings.push_back("no city table configured; geographic filter skipped");
    } else {
      const auto cities = load_cities(cfg.cities);
      for (const auto& v : validate_separation(cities, cfg.min_separation_km)) {
        s.warnings.push_back("cities " + v.a + " and " + v.b + " are " + std::to_string(v.distance_km) +
                             " km apart (< " + std::to_string(cfg.min_separation_km) + ")");
      }
      auto res = filter_cities(records, cities, cfg.min_city_count);
      for (const auto& [id, st] : res.report.cities) {
        if (!st.kept) s.warnings.push_back("city " + id + " dropped (" + std::to_string(st.count) + " images)");
      }
      if (res.report.unassigned) {
        s.warnings.push_back(std::to_string(res.report.unassigned) + " geo-tagged images outside every city");
      }
      std::set<std::string> keep_ids;
      for (const auto& r : res.kept) keep_ids.insert(r.image_id);
      if (cfg.keep_untagged) {
        for (const auto& r : res.untagged) keep_ids.insert(r.image_id);
      }
      std::map<std::string, std::string> city_of;
      for (const auto& r : res.kept) city_of[r.image_id] = *r.source_city;
      for (const auto& r : records) {
        if (!keep_ids.count(r.image_id)) continue;
        ImageRecord k = r;
        if (auto it = city_of.find(r.image_id); it != city_of.end()) k.source_city = it->second;
        kept.push_back(std::move(k));
      }
    }
    s.out = kept.size();
    s.dropped = s.in - s.out;
    report.stages.push_back({"city_filter", s});
    return kept;
  });

  // detection import (against the full manifest) and selection
  ImportResult imported = detail::run_stage("detect_import", [&] { return import_detections(cfg.detections, records); });
  {
    StageReport s{imported.rows, imported.detections.size(), imported.collapsed, {}};
    if (imported.collapsed) {
      s.warnings.push_back(std::to_string(imported.collapsed) + " detections fell outside their image");
    }
    report.stages.push_back({"detect_import", s});
  }
  std::vector<PersonBox> selected = detail::run_stage("select", [&] {
    const std::set<std::string> in_corpus = [&] {
      std::set<std::string> ids;
      for (const auto& r : corpus) ids.insert(r.image_id);
      return ids;
    }();
    std::vector<Detection> scoped;
    for (const auto& d : imported.detections) {
      if (in_corpus.count(d.image_id)) scoped.push_back(d);
    }
    StageReport s;
    s.in = imported.detections.size();
    if (scoped.size() != imported.detections.size()) {
      s.warnings.push_back(std::to_string(imported.detections.size() - scoped.size()) +
                           " detections on images removed by the city filter");
    }
    auto boxes = select_person_detections(scoped, cfg.score_threshold);
    s.out = boxes.size();
    s.dropped = s.in - s.out;
    report.stages.push_back({"select", s});
    return boxes;
  });

  // refiner
  LinearModel model = detail::run_stage("train", [&] {
    if (!cfg.train) return load_model(cfg.model);
    const TrainSpec& t = *cfg.train;
    LinearModel m;
    StageReport s;
    if (!t.positive_features.empty()) {
      auto pos = feature_rows_as_vectors(t.positive_features);
      auto neg = feature_rows_as_vectors(t.negative_features);
      s.in = pos.size() + neg.size();
      m = train_svm(pos, neg, t.params);
    } else {
      const auto positives = load_detection_rows(t.positives, true);
      s.in = positives.size();
      m = train_refiner_from_boxes(records, positives, selected, store, t);
    }
    s.out = 1;
    if (!t.model_out.empty()) save_model(m, outputs.stage(t.model_out));
    report.stages.push_back({"train", s});
    return m;
  });

  // refinement
  RefinementResult refined = detail::run_stage("refine", [&] {
    std::unique_ptr<FeatureSource> src;
    if (cfg.features == "builtin") {
      src = std::make_unique<BuiltinFeatureSource>(corpus, store);
    } else {
      src = std::make_unique<FileFeatureSource>(fs::path(cfg.features));
    }
    return refine_dataset(selected, model, *src);
  });
  {
    StageReport s{refined.report.input, refined.report.kept, refined.report.dropped, {}};
    if (!refined.report.emptied_images.empty()) {
      s.warnings.push_back(std::to_string(refined.report.emptied_images.size()) +
                           " images lost all their boxes");
    }
    report.stages.push_back({"refine", s});
  }

  // emission
  report.stats = detail::run_stage("emit", [&] {
    EmitOptions opts;
    opts.stats_path = outputs.stage(cfg.stats_out.empty() ? stats_path_for(cfg.dataset_out) : cfg.stats_out);
    if (!cfg.crops_dir.empty()) {
      opts.crops_dir = cfg.crops_dir;
      opts.image_store = &store;
    }
    return emit_dataset(refined.kept, corpus, outputs.stage(cfg.dataset_out), opts);
  });
  report.stages.push_back({"emit", {refined.kept.size(), report.stats.n_boxes, 0, {}}});

  if (cfg.noise) {
    detail::run_stage("noise", [&] {
      const Dataset ds = dataset_from_json(dataset_to_json(refined.kept, corpus));
      auto res = inject_noise(ds, cfg.noise->spec);
      write_json_file(dataset_to_json(res.dataset.boxes, res.dataset.images), outputs.stage(cfg.noise->out));
      fs::path log = cfg.noise->log;
      if (log.empty()) {
        log = cfg.noise->out;
        log.replace_extension(".log.jsonl");
      }
      write_noise_log(res.log, outputs.stage(log));
      StageReport s{ds.boxes.size(), ds.boxes.size(), 0, {}};
      if (res.failures()) s.warnings.push_back(std::to_string(res.failures()) + " boxes could not be relocated");
      report.stages.push_back({"noise", s});
      return 0;
    });
  }
  if (cfg.eval) {
    detail::run_stage("eval", [&] {
      const auto gts = load_detection_rows(cfg.eval->ground_truth, true);
      const auto dets = load_detection_rows(cfg.eval->detections);
      const auto images = build_eval_images(gts, dets);
      const auto curve = compute_det_curve(images, match_detections(images, cfg.eval->match), cfg.eval->match);
      report.lamr_percent = curve.lamr * 100.0;
      if (!cfg.eval->curve_csv.empty()) {
        std::ofstream out(outputs.stage(cfg.eval->curve_csv));
        write_curve_csv(curve, out);
      }
      if (!cfg.eval->summary.empty()) write_json_file(curve_summary(curve), outputs.stage(cfg.eval->summary), 2);
      report.stages.push_back({"eval", {dets.size(), curve.points.size(), 0, {}}});
      return 0;
    });
  }
  if (cfg.audit) {
    detail::run_stage("audit", [&] {
      std::vector<std::string> ids;
      for (const auto& b : refined.kept) ids.push_back(b.box_id);
      auto session = sample_boxes(ids, std::min(cfg.audit->n, ids.size()), cfg.audit->seed,
                                  cfg.audit->session_out.stem().string());
      session.dataset = cfg.dataset_out.string();
      save_session_atomic(session, outputs.stage(cfg.audit->session_out));
      report.audit_session = session.session_id;
      report.stages.push_back({"audit", {ids.size(), session.sample.size(), 0, {}}});
      return 0;
    });
  }

  if (!cfg.run_report.empty()) {
    std::ofstream out(outputs.stage(cfg.run_report));
    out << report.to_json().dump(2) << '\n';
  }
  if (!cfg.run_manifest.empty()) {
    nlohmann::ordered_json m;
    m["inputs"] = {{"manifest", cfg.manifest.string()}, {"detections", cfg.detections.string()},
                   {"cities", cfg.cities.string()}, {"features", cfg.features}, {"model", cfg.model.string()}};
    m["parameters"] = {{"score_threshold", cfg.score_threshold}, {"min_city_count", cfg.min_city_count},
                       {"min_separation_km", cfg.min_separation_km}, {"seed", cfg.seed}};
    m["outputs"] = {{"dataset", cfg.dataset_out.string()},
                    {"stats", (cfg.stats_out.empty() ? stats_path_for(cfg.dataset_out) : cfg.stats_out).string()}};
    m["stats"] = report.stats.to_json();
    std::ofstream out(outputs.stage(cfg.run_manifest));
    out << m.dump(2) << '\n';
  }
  outputs.commit();
  return report;
}

}  // namespace wspd
