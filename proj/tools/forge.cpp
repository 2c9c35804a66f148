// forge: command-line driver for the weakly supervised person-dataset tools.
//
//   forge run            full collection pipeline from a JSON config
//   forge train-refiner  fit the crop refiner (linear SVM)
//   forge noise          translate a fraction of boxes into false annotations
//   forge eval           DET curve and log-average miss rate
//   forge audit          quality-audit sessions (serve | sample | report)
//   forge stats          dataset composition statistics
//   forge synth          write a small synthetic corpus

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "wspd/audit_server.hpp"
#include "wspd/synthetic.hpp"
#include "wspd/wspd.hpp"

namespace fs = std::filesystem;
using wspd::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

std::string absolute(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

wspd::AuditServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forge - weakly supervised person dataset tools"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run the collection pipeline from a JSON config");
  std::string config_path;
  std::optional<std::string> o_manifest, o_detections, o_cities, o_model, o_features, o_out, o_report;
  std::optional<double> o_threshold, o_min_sep;
  std::optional<std::size_t> o_min_count;
  std::optional<std::uint64_t> o_seed;
  run->add_option("-c,--config", config_path, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--manifest", o_manifest, "Overrides config key 'manifest'");
  run->add_option("--detections", o_detections, "Overrides 'detections'");
  run->add_option("--cities", o_cities, "Overrides 'cities'");
  run->add_option("--model", o_model, "Overrides 'model'");
  run->add_option("--features", o_features, "Overrides 'features' (builtin or a feature file)");
  run->add_option("--score-threshold", o_threshold, "Overrides 'score_threshold'");
  run->add_option("--min-city-count", o_min_count, "Overrides 'min_city_count'");
  run->add_option("--min-separation-km", o_min_sep, "Overrides 'min_separation_km'");
  run->add_option("--seed", o_seed, "Overrides 'seed'");
  run->add_option("--out", o_out, "Overrides 'output.dataset'");
  run->add_option("--run-report", o_report, "Overrides 'output.run_report'");

  // train-refiner
  auto* train = app.add_subcommand("train-refiner", "Train the linear SVM crop refiner");
  std::string t_manifest, t_positives, t_detections, t_image_root, t_pos_feat, t_neg_feat, t_out;
  wspd::TrainSpec tspec;
  double t_threshold = wspd::kDefaultScoreThreshold;
  train->add_option("--manifest", t_manifest, "Image manifest (jsonl or csv)");
  train->add_option("--image-root", t_image_root, "Directory image paths are relative to (default: manifest dir)");
  train->add_option("--positives", t_positives, "Annotated whole-body boxes (detection JSONL)");
  train->add_option("--detections", t_detections, "Detector output; person boxes are kept out of negative crops");
  train->add_option("--score-threshold", t_threshold, "Threshold applied to --detections");
  train->add_option("--negatives-per-image", tspec.negatives_per_image, "Random background crops per image");
  train->add_option("--pos-features", t_pos_feat, "Precomputed positive feature rows (JSONL)");
  train->add_option("--neg-features", t_neg_feat, "Precomputed negative feature rows (JSONL)");
  train->add_option("--lambda", tspec.params.lambda, "L2 regularization strength");
  train->add_option("--epochs", tspec.params.epochs, "Passes over the training set");
  train->add_option("--seed", tspec.params.seed, "Shuffle / negative-crop seed");
  train->add_option("-o,--out", t_out, "Model file to write")->required();

  // noise
  auto* noise = app.add_subcommand("noise", "Inject translated-box annotation noise");
  noise->alias("noiselab");
  wspd::NoiseSpec nspec;
  std::string n_in, n_out, n_log;
  noise->add_option("--rate", nspec.rate, "Fraction of boxes to translate")->required()->check(CLI::Range(0.0, 1.0));
  noise->add_option("--seed", nspec.seed, "Selection and placement seed");
  noise->add_option("--max-tries", nspec.max_tries, "Rejection samples before the exhaustive scan");
  noise->add_option("--in", n_in, "Input dataset JSON")->required()->check(CLI::ExistingFile);
  noise->add_option("--out", n_out, "Output dataset JSON")->required();
  noise->add_option("--log", n_log, "Noise log JSONL (default: <out>.log.jsonl)");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate detections against ground truth");
  std::string e_gt, e_dets, e_csv, e_summary;
  wspd::MatchParams mparams;
  eval->add_option("--gt", e_gt, "Ground-truth JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--dets", e_dets, "Detection JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--iou", mparams.iou_thresh, "IoU threshold for a match");
  eval->add_option("--min-height", mparams.min_height, "Ground truth shorter than this is ignored");
  eval->add_option("--curve", e_csv, "Write the DET curve as CSV");
  eval->add_option("--summary", e_summary, "Write a JSON summary");

  // audit
  auto* audit = app.add_subcommand("audit", "Dataset quality audit");
  audit->require_subcommand(1);
  auto* serve = audit->add_subcommand("serve", "Serve the audit HTTP API");
  std::string s_dir = "sessions", s_root, s_ui, s_host = "127.0.0.1";
  int s_port = 8080;
  serve->add_option("--sessions", s_dir, "Directory holding session files");
  serve->add_option("--data-root", s_root, "Directory dataset and image paths are relative to");
  serve->add_option("--ui", s_ui, "Static directory with the review console");
  serve->add_option("--host", s_host, "Bind address");
  serve->add_option("--port", s_port, "Port (0 picks a free one)");
  auto* sample = audit->add_subcommand("sample", "Create a session file from a dataset");
  std::string a_dataset, a_out;
  std::size_t a_n = wspd::kDefaultAuditSampleSize;
  std::uint64_t a_seed = 0;
  sample->add_option("--dataset", a_dataset, "Dataset JSON")->required()->check(CLI::ExistingFile);
  sample->add_option("--n", a_n, "Number of boxes to sample");
  sample->add_option("--seed", a_seed, "Sampling seed");
  sample->add_option("-o,--out", a_out, "Session file to write")->required();
  auto* areport = audit->add_subcommand("report", "Print the report of a session file");
  std::string r_session;
  bool r_json = false;
  areport->add_option("session", r_session, "Session file")->required()->check(CLI::ExistingFile);
  areport->add_flag("--json", r_json, "Print JSON instead of a table");

  // stats
  auto* stats = app.add_subcommand("stats", "Composition statistics of a dataset JSON");
  std::string st_dataset;
  stats->add_option("dataset", st_dataset, "Dataset JSON")->required()->check(CLI::ExistingFile);

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus with a ready-to-run config");
  std::string sy_out;
  wspd::SyntheticParams sy;
  synth->add_option("-o,--out", sy_out, "Output directory")->required();
  synth->add_option("--images", sy.n_images, "Number of images");
  synth->add_option("--seed", sy.seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) {
      json doc = wspd::read_json_file(config_path);
      auto set = [&](const char* key, const auto& v) { doc[key] = v; };
      if (o_manifest) set("manifest", absolute(*o_manifest));
      if (o_detections) set("detections", absolute(*o_detections));
      if (o_cities) set("cities", absolute(*o_cities));
      if (o_model) {
        set("model", absolute(*o_model));
        doc.erase("train");
      }
      if (o_features) set("features", *o_features == "builtin" ? *o_features : absolute(*o_features));
      if (o_threshold) set("score_threshold", *o_threshold);
      if (o_min_count) set("min_city_count", *o_min_count);
      if (o_min_sep) set("min_separation_km", *o_min_sep);
      if (o_seed) set("seed", *o_seed);
      if (o_out) doc["output"]["dataset"] = absolute(*o_out);
      if (o_report) doc["output"]["run_report"] = absolute(*o_report);
      const auto cfg = wspd::config_from_json(doc, fs::path(config_path).parent_path());
      const auto report = wspd::run_pipeline(cfg);
      std::cout << report.to_json().dump(2) << '\n';
      std::cout << "dataset: " << report.stats.n_original_images << " images, " << report.stats.n_boxes
                << " boxes -> " << cfg.dataset_out.string() << '\n';
      if (report.lamr_percent) std::cout << "log-average miss rate: " << *report.lamr_percent << "%\n";
    } else if (*train) {
      wspd::LinearModel model;
      if (!t_pos_feat.empty() || !t_neg_feat.empty()) {
        if (t_pos_feat.empty() || t_neg_feat.empty()) {
          throw wspd::ConfigError("--pos-features and --neg-features must be given together");
        }
        model = wspd::train_svm(wspd::feature_rows_as_vectors(t_pos_feat), wspd::feature_rows_as_vectors(t_neg_feat),
                                tspec.params);
      } else {
        if (t_manifest.empty() || t_positives.empty()) {
          throw wspd::ConfigError("--manifest and --positives are required without feature files");
        }
        const auto images = wspd::load_manifest(t_manifest, wspd::manifest_format_for_path(t_manifest));
        std::vector<wspd::PersonBox> known;
        if (!t_detections.empty()) {
          known = wspd::select_person_detections(wspd::import_detections(t_detections, images).detections, t_threshold);
        }
        wspd::ImageStore store(t_image_root.empty() ? fs::path(t_manifest).parent_path() : fs::path(t_image_root));
        model = wspd::train_refiner_from_boxes(images, wspd::load_detection_rows(t_positives, true), known, store, tspec);
      }
      wspd::save_model(model, t_out);
      std::cout << "model (dim " << model.dim() << ") -> " << t_out << '\n';
    } else if (*noise) {
      const auto res = wspd::inject_noise(wspd::load_dataset(n_in), nspec);
      wspd::write_json_file(wspd::dataset_to_json(res.dataset.boxes, res.dataset.images), n_out);
      fs::path log = n_log.empty() ? fs::path(n_out).replace_extension(".log.jsonl") : fs::path(n_log);
      wspd::write_noise_log(res.log, log);
      std::cout << "selected " << res.log.size() << ", moved " << res.moved() << ", failed " << res.failures()
                << " of " << res.dataset.boxes.size() << " boxes -> " << n_out << '\n';
    } else if (*eval) {
      const auto images = wspd::build_eval_images(wspd::load_detection_rows(e_gt, true), wspd::load_detection_rows(e_dets));
      const auto matches = wspd::match_detections(images, mparams);
      const auto curve = wspd::compute_det_curve(images, matches, mparams);
      if (!e_csv.empty()) {
        std::ofstream out(e_csv);
        wspd::write_curve_csv(curve, out);
      }
      if (!e_summary.empty()) wspd::write_json_file(wspd::curve_summary(curve), e_summary, 2);
      std::cout << "TP " << matches.tp() << "  FP " << matches.fp() << "  FN " << matches.fn() << '\n'
                << "log-average miss rate: " << curve.lamr * 100.0 << "%\n";
    } else if (*serve) {
      wspd::SessionStore store(s_dir, s_root);
      wspd::AuditServer server(store, s_ui);
      if (s_port == 0) {
        s_port = server.bind_any_port(s_host);
        if (s_port <= 0) throw wspd::ConfigError("cannot bind " + s_host);
      } else if (!server.bind(s_host, s_port)) {
        throw wspd::ConfigError("cannot bind " + s_host + ":" + std::to_string(s_port));
      }
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "audit server on http://" << s_host << ":" << s_port << std::endl;
      server.listen_after_bind();
    } else if (*sample) {
      const auto ds = wspd::load_dataset(a_dataset);
      std::vector<std::string> ids;
      for (const auto& b : ds.boxes) ids.push_back(b.box_id);
      auto session = wspd::sample_boxes(ids, a_n, a_seed, fs::path(a_out).stem().string());
      session.dataset = absolute(a_dataset);
      wspd::save_session_atomic(session, a_out);
      std::cout << "session " << session.session_id << " with " << session.sample.size() << " boxes -> " << a_out
                << '\n';
    } else if (*areport) {
      const auto r = wspd::audit_report(wspd::load_session(r_session));
      if (r_json) {
        std::cout << r.to_json().dump(2) << '\n';
      } else {
        std::cout << wspd::format_report(r);
      }
    } else if (*stats) {
      const auto ds = wspd::load_dataset(st_dataset);
      std::cout << wspd::dataset_stats(ds.boxes, ds.images).to_json().dump(2) << '\n';
    } else if (*synth) {
      const auto sc = wspd::make_synthetic_corpus(sy_out, sy);
      std::cout << sc.images.size() << " images, " << sc.dets.size() << " detections -> " << sy_out << '\n'
                << "run with: forge run --config " << sc.config.string() << '\n';
    }
  } catch (const wspd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const wspd::StageError& e) {
    std::cerr << "stage failure in " << e.stage() << ": " << e.what() << '\n';
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return kExitOk;
}
