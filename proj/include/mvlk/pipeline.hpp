/*
 * mvlk - multi-view LiDAR toolkit
 *
 * The full chain behind `mvlk pipeline`: load or generate the scene,
 * calibrate every node against the reference, simulate the sync session,
 * early-fuse, detect, track, evaluate, and write reports plus a manifest.
 */

#ifndef MVLK_PIPELINE_HPP
#define MVLK_PIPELINE_HPP

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "mvlk/config.hpp"
#include "mvlk/experiments.hpp"
#include "mvlk/io.hpp"
#include "mvlk/registration.hpp"
#include "mvlk/scene.hpp"
#include "mvlk/syncsim.hpp"

namespace mvlk {

/// Scene inputs in the shape the experiments use. `extrinsics` is empty
/// when ground-truth poses are unknown.
struct SceneInputs {
  SyntheticScene scene;
  std::vector<int> node_ids;
  bool has_ground_truth = false;
};

/// Sorted .mvlc files of a directory.
inline std::vector<std::filesystem::path> frame_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  std::error_code ec;
  for (const auto& e : std::filesystem::directory_iterator(dir, ec)) {
    if (e.is_regular_file() && e.path().extension() == ".mvlc") out.push_back(e.path());
  }
  if (ec) throw Error(ErrorKind::kIo, "cannot list " + dir.string() + ": " + ec.message());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<PointCloud> read_frame_dir(const std::filesystem::path& dir) {
  std::vector<PointCloud> frames;
  for (const auto& f : frame_files(dir)) frames.push_back(read_frame(f));
  if (frames.empty()) throw Error(ErrorKind::kEmptyInput, "no .mvlc frames in " + dir.string());
  return frames;
}

/// Ground-truth boxes per frame and trajectories from annotation records.
inline void attach_annotations(SyntheticScene& scene, std::span<const DetectionRecord> records) {
  for (const auto& r : records) {
    if (!r.box.track_id) throw Error(ErrorKind::kBadRecord, "annotation without track_id");
    if (r.frame < 0 || static_cast<std::size_t>(r.frame) >= scene.boxes.size()) {
      throw Error(ErrorKind::kBadRecord, "annotation frame " + std::to_string(r.frame) + " out of range");
    }
    scene.boxes[static_cast<std::size_t>(r.frame)].push_back(r.box);
  }
  scene.trajectories = trajectories_from_records(records);
}

inline SceneInputs load_scene_inputs(const PipelineConfig& cfg) {
  SceneInputs in;
  if (cfg.scene.kind == "crossroad") {
    SceneSpec spec = crossroad_scene(cfg.seed, cfg.scene.frames, cfg.scene.points_per_frame);
    spec.lidar.noise_sigma = cfg.scene.noise_sigma;
    spec.reference_density = cfg.scene.reference_density;
    in.scene = generate_synthetic_scene(spec);
    for (std::size_t n = 0; n < in.scene.frames.size(); ++n) in.node_ids.push_back(static_cast<int>(n));
    in.has_ground_truth = true;
    return in;
  }
  std::size_t frames = 0;
  for (const auto& node : cfg.inputs.nodes) {
    in.scene.frames.push_back(read_frame_dir(node.frames));
    in.node_ids.push_back(node.id);
    const auto count = in.scene.frames.back().size();
    if (in.scene.frames.size() > 1 && count != frames) {
      throw Error(ErrorKind::kBadRecord, "nodes have different frame counts");
    }
    frames = count;
  }
  in.scene.reference = read_frame(cfg.inputs.reference);
  in.scene.boxes.assign(frames, {});
  if (!cfg.inputs.annotations.empty()) {
    attach_annotations(in.scene, read_detections(cfg.inputs.annotations));
    in.has_ground_truth = true;
  }
  return in;
}

// ---------------------------------------------------------------------------
// Calibration stage
// ---------------------------------------------------------------------------

struct CalibrationRow {
  int node_id = 0;
  RegistrationResult result;
  bool failed = false;
  std::optional<double> rotation_error_deg;
  std::optional<double> translation_error_m;
  std::optional<double> corner_error_m;
};

/// Reference corners paired with their node-frame positions as an annotator
/// would pick them, with `sigma` metres of per-axis noise.
inline std::vector<CornerPair> synthetic_corner_pairs(const SyntheticScene& scene, std::size_t node, double sigma,
                                                      std::uint64_t seed) {
  std::mt19937_64 rng(detail::mix_seed(seed, 0xC042ull, node));
  std::normal_distribution<double> n(0.0, sigma);
  const RigidTransform to_node = scene.extrinsics.at(node).inverse();
  std::vector<CornerPair> pairs;
  for (const auto& c : scene.corners) {
    const Point3 noise(n(rng), n(rng), n(rng));
    pairs.push_back({to_node.apply(c) + noise, c});
  }
  return pairs;
}

inline CalibrationRow calibrate_node(const SyntheticScene& scene, std::size_t node, int node_id,
                                     const CalibrationSection& cfg) {
  HierarchyConfig h = cfg.hierarchy;
  h.seed = detail::mix_seed(cfg.hierarchy.seed, 0xCA1ull, static_cast<std::uint64_t>(node_id));
  const PointCloud source = accumulate_frames(scene.frames.at(node), cfg.duration_s);
  if (source.empty()) throw Error(ErrorKind::kEmptyInput, "node " + std::to_string(node_id) + " has no points");
  CalibrationRow row;
  row.node_id = node_id;
  row.result = hierarchical_register(source, scene.reference, h);
  row.failed = calibration_failed(row.result, h);
  if (node < scene.extrinsics.size()) {
    const auto& truth = scene.extrinsics[node];
    row.rotation_error_deg = rotation_error(row.result.transform, truth) * 180.0 / kPi;
    row.translation_error_m = translation_error(row.result.transform, truth);
    if (!scene.corners.empty()) {
      const auto pairs = synthetic_corner_pairs(scene, node, 0.01, cfg.hierarchy.seed);
      row.corner_error_m = evaluate_point_projection_error(pairs, row.result.transform);
    }
  }
  return row;
}

// ---------------------------------------------------------------------------
// Full run
// ---------------------------------------------------------------------------

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct PipelineResult {
  std::vector<int> node_ids;
  std::vector<CalibrationRow> calibration;
  TimeErrorReport sync;
  std::vector<FrameBox> detections;  // all views, early fusion, world frame
  TrajectorySet tracks;
  bool has_ground_truth = false;
  std::optional<DetectionScores> detection_scores;
  std::vector<ViewGroupRow> view_counts;
  std::vector<FusionRow> fusion;
  std::vector<TrackingRow> tracking;
  std::vector<StageTiming> timings;
};

class StageClock {
 public:
  explicit StageClock(std::vector<StageTiming>& out, std::ostream* log) : out_(out), log_(log) {}

  template <class F>
  auto run(const std::string& stage, F&& f) {
    if (log_) *log_ << "[" << stage << "]" << std::endl;
    const auto t0 = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      record(stage, t0);
    } else {
      auto r = f();
      record(stage, t0);
      return r;
    }
  }

 private:
  void record(const std::string& stage, std::chrono::steady_clock::time_point t0) {
    out_.push_back({stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
  }
  std::vector<StageTiming>& out_;
  std::ostream* log_;
};

/// Runs every stage. Calibration failure is reported through the rows;
/// the caller decides whether to abort.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  PipelineResult res;
  StageClock clock(res.timings, log);
  const SceneInputs in = clock.run("load", [&] { return load_scene_inputs(cfg); });
  const SyntheticScene& scene = in.scene;
  res.node_ids = in.node_ids;
  res.has_ground_truth = in.has_ground_truth;

  clock.run("calibrate", [&] {
    for (std::size_t n = 0; n < scene.frames.size(); ++n) {
      res.calibration.push_back(calibrate_node(scene, n, in.node_ids[n], cfg.calibration));
    }
  });
  std::vector<RigidTransform> extrinsics;
  for (const auto& row : res.calibration) extrinsics.push_back(row.result.transform);

  res.sync = clock.run("sync-sim", [&] { return compute_time_error_report(simulate_session(cfg.sync)); });

  DetectionCache cache(scene, extrinsics, cfg.detector);
  std::vector<int> all(scene.frames.size());
  std::iota(all.begin(), all.end(), 0);
  res.detections = clock.run("fuse+detect", [&] { return cache.get(all); });
  res.tracks = clock.run("track", [&] {
    return track_sequence(boxes_per_frame(res.detections, scene.boxes.size()), cfg.tracker, 0.1);
  });

  if (res.has_ground_truth) {
    const auto exp = cfg.experiment();
    clock.run("eval", [&] {
      res.detection_scores = score_detections(res.detections, ground_truth_boxes(scene), cfg.eval.detection);
      res.view_counts = view_count_experiment(cache, cfg.fusion.view_counts, exp);
      res.fusion = fusion_experiment(cache, exp);
      res.tracking = detector_tracking_experiment(cache, cfg.tracker, cfg.eval.mot);
    });
  }
  return res;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

inline Json class_map_json(const std::map<ObjectClass, double>& m) {
  Json j = Json::object();
  for (const auto& [c, v] : m) j[to_string(c)] = v;
  return j;
}

inline Json mot_json(const MotReport& r) {
  return {{"mota", r.mota}, {"motp", r.motp}, {"ids", r.ids}, {"frag", r.frag},
          {"fn", r.fn},     {"fp", r.fp},     {"gt", r.gt},   {"matches", r.matches}};
}

}  // namespace detail

inline std::vector<CalibrationRecord> calibration_records(const PipelineResult& res) {
  std::vector<CalibrationRecord> out;
  for (const auto& row : res.calibration) {
    out.push_back({row.node_id, row.result.transform, row.result.fitness, row.result.inlier_rmse});
  }
  return out;
}

/// Per-frame time error table, microseconds, one column per armed node.
inline std::string format_sync_table(const TimeErrorReport& r) {
  std::string out = "frame";
  for (const auto& s : r.stats) out += ",node" + std::to_string(s.node) + "_us";
  out += "\n";
  for (std::size_t k = 0; k < r.errors.size(); ++k) {
    out += std::to_string(k);
    for (double e : r.errors[k]) out += "," + detail::fmt("%.3f", e * 1e6);
    out += "\n";
  }
  return out;
}

inline Json report_json(const PipelineResult& res) {
  Json j;
  Json calib = Json::array();
  for (const auto& row : res.calibration) {
    Json c = {{"node_id", row.node_id},
              {"fitness", row.result.fitness},
              {"inlier_rmse", row.result.inlier_rmse},
              {"iterations", row.result.iterations_used},
              {"failed", row.failed}};
    if (row.rotation_error_deg) c["rotation_error_deg"] = *row.rotation_error_deg;
    if (row.translation_error_m) c["translation_error_m"] = *row.translation_error_m;
    if (row.corner_error_m) c["corner_error_m"] = *row.corner_error_m;
    calib.push_back(c);
  }
  j["calibration"] = calib;
  Json sync = Json::array();
  for (const auto& s : res.sync.stats) {
    sync.push_back({{"node", s.node}, {"max_abs_s", s.max_abs_s}, {"mean_abs_s", s.mean_abs_s},
                    {"mean_s", s.mean_s}, {"std_s", s.std_s}});
  }
  j["sync"] = {{"nodes", sync}, {"start_misaligned", res.sync.start_misaligned}};
  j["detections"] = res.detections.size();
  j["tracks"] = res.tracks.size();
  if (res.detection_scores) {
    j["detection"] = {{"ap", detail::class_map_json(res.detection_scores->ap)},
                      {"mean_ap", res.detection_scores->mean_ap},
                      {"recall", res.detection_scores->recall_all}};
  }
  Json views = Json::array();
  for (const auto& r : res.view_counts) {
    views.push_back({{"views", r.views}, {"subsets", r.subsets}, {"ap", detail::class_map_json(r.ap)},
                     {"recall", detail::class_map_json(r.recall)}, {"mean_ap", r.mean_ap},
                     {"recall_all", r.recall_all}});
  }
  j["view_counts"] = views;
  Json fusion = Json::array();
  for (const auto& r : res.fusion) {
    fusion.push_back({{"method", r.method}, {"ap", detail::class_map_json(r.scores.ap)},
                      {"mean_ap", r.scores.mean_ap}, {"recall", r.scores.recall_all}});
  }
  j["fusion"] = fusion;
  Json tracking = Json::array();
  for (const auto& r : res.tracking) {
    Json t = detail::mot_json(r.report);
    t["input"] = r.input;
    tracking.push_back(t);
  }
  j["tracking"] = tracking;
  return j;
}

inline std::string format_report_text(const PipelineResult& res) {
  using detail::fmt;
  std::string out;
  out += "Calibration\n";
  out += "node  fitness  rmse_m   rot_deg  trans_m  corner_m  status\n";
  for (const auto& r : res.calibration) {
    out += fmt("%-5.0f ", r.node_id) + fmt("%7.4f  ", r.result.fitness) + fmt("%7.4f  ", r.result.inlier_rmse);
    out += r.rotation_error_deg ? fmt("%7.4f  ", *r.rotation_error_deg) : "      -  ";
    out += r.translation_error_m ? fmt("%7.4f  ", *r.translation_error_m) : "      -  ";
    out += r.corner_error_m ? fmt("%8.4f  ", *r.corner_error_m) : "       -  ";
    out += r.failed ? "FAILED\n" : "ok\n";
  }
  out += "\nTime synchronization\n";
  out += "node  max_abs_us  mean_abs_us  std_us\n";
  for (const auto& s : res.sync.stats) {
    out += fmt("%-5.0f ", s.node) + fmt("%10.3f  ", s.max_abs_s * 1e6) + fmt("%11.3f  ", s.mean_abs_s * 1e6) +
           fmt("%6.3f\n", s.std_s * 1e6);
  }
  out += std::string("start edges ") + (res.sync.start_misaligned ? "MISALIGNED" : "aligned") + "\n";
  auto ap_header = [&] {
    std::string h;
    for (auto c : kAllClasses) h += std::string("  AP_") + to_string(c);
    return h;
  };
  if (!res.view_counts.empty()) {
    out += "\nDetection vs. number of views\n";
    out += "views" + ap_header() + "  mAP     recall\n";
    for (const auto& r : res.view_counts) {
      out += fmt("%-5.0f", r.views);
      for (auto c : kAllClasses) {
        const auto it = r.ap.find(c);
        const std::string name = std::string("  AP_") + to_string(c);
        out += it == r.ap.end() ? std::string(name.size() - 1, ' ') + "-"
                                : fmt(("%" + std::to_string(name.size()) + ".4f").c_str(), it->second);
      }
      out += fmt("  %.4f", r.mean_ap) + fmt("  %.4f\n", r.recall_all);
    }
  }
  if (!res.fusion.empty()) {
    out += "\nFusion methods\n";
    out += "method        " + ap_header() + "  mAP     recall\n";
    for (const auto& r : res.fusion) {
      char name[32];
      std::snprintf(name, sizeof(name), "%-14s", r.method.c_str());
      out += name;
      for (auto c : kAllClasses) {
        const auto it = r.scores.ap.find(c);
        const std::string col = std::string("  AP_") + to_string(c);
        out += it == r.scores.ap.end() ? std::string(col.size() - 1, ' ') + "-"
                                       : fmt(("%" + std::to_string(col.size()) + ".4f").c_str(), it->second);
      }
      out += fmt("  %.4f", r.scores.mean_ap) + fmt("  %.4f\n", r.scores.recall_all);
    }
  }
  if (!res.tracking.empty()) {
    out += "\nTracking\n";
    out += "input         MOTA     MOTP     IDS   FRAG  FN     FP\n";
    for (const auto& r : res.tracking) {
      char line[160];
      std::snprintf(line, sizeof(line), "%-12s  %7.4f  %7.4f  %-5lld %-5lld %-6lld %lld\n", r.input.c_str(),
                    r.report.mota, r.report.motp, static_cast<long long>(r.report.ids),
                    static_cast<long long>(r.report.frag), static_cast<long long>(r.report.fn),
                    static_cast<long long>(r.report.fp));
      out += line;
    }
  }
  return out;
}

/// Output file names written by `write_pipeline_outputs`, manifest last.
inline const std::vector<std::string>& pipeline_output_files() {
  static const std::vector<std::string> files = {"calibration.jsonl", "sync_errors.csv", "detections.jsonl",
                                                 "tracks.jsonl",      "report.json",     "report.txt"};
  return files;
}

/// Writes every output plus manifest.json. Everything except the manifest's
/// "timings" member is a pure function of the config.
inline void write_pipeline_outputs(const std::filesystem::path& dir, const PipelineConfig& cfg,
                                   const PipelineResult& res) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<DetectionRecord> dets;
  for (const auto& f : res.detections) dets.push_back({f.frame, f.box});
  std::map<std::string, std::string> content;
  content["calibration.jsonl"] = format_calibrations(calibration_records(res));
  content["sync_errors.csv"] = format_sync_table(res.sync);
  content["detections.jsonl"] = format_detections(dets);
  content["tracks.jsonl"] = format_detections(trajectory_records(res.tracks));
  content["report.json"] = report_json(res).dump(2) + "\n";
  content["report.txt"] = format_report_text(res);
  Json outputs = Json::object();
  for (const auto& name : pipeline_output_files()) {
    write_file_atomic(dir / name, content.at(name));
    outputs[name] = hex64(fnv1a64(content.at(name)));
  }
  Json timings = Json::object();
  for (const auto& t : res.timings) timings[t.stage] = t.seconds;
  Json manifest = {{"seed", cfg.seed},
                   {"config_hash", config_hash(cfg)},
                   {"config", pipeline_config_json(cfg)},
                   {"outputs", outputs},
                   {"timings_s", timings}};
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace mvlk

#endif  // MVLK_PIPELINE_HPP
