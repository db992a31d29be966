// mvlk command-line front end. Exit codes: 0 ok, 2 bad input, 3 algorithmic
// failure, 4 config error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mvlk/config.hpp"
#include "mvlk/eval.hpp"
#include "mvlk/fusion.hpp"
#include "mvlk/io.hpp"
#include "mvlk/pipeline.hpp"
#include "mvlk/registration.hpp"
#include "mvlk/scene.hpp"
#include "mvlk/syncsim.hpp"
#include "mvlk/tracking.hpp"

namespace fs = std::filesystem;
using namespace mvlk;

namespace {

std::string frame_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05zu.mvlc", k);
  return buf;
}

/// Node id of a frame directory: the header id of its first frame, else the
/// fallback.
int node_id_of(const std::vector<PointCloud>& frames, int fallback) {
  if (!frames.empty() && frames.front().source_node) return *frames.front().source_node;
  return fallback;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string kind = "crossroad";
  std::uint64_t seed = 1;
  int frames = 20;
  int points = 8000;
  double noise = 0.02;
  std::optional<double> density;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  SceneSpec spec;
  if (a.kind == "crossroad") {
    spec = crossroad_scene(a.seed, a.frames, a.points);
    spec.reference_density = 400.0;
  } else if (a.kind == "walkers") {
    spec = walker_scene(a.seed, a.frames, a.points);
  } else if (a.kind == "calibration") {
    spec = calibration_scene(a.seed, 4);
    spec.frame_count = a.frames;
    spec.lidar.points_per_frame = a.points;
  } else {
    throw Error(ErrorKind::kConfigInvalid, "unknown scene kind " + a.kind);
  }
  spec.lidar.noise_sigma = a.noise;
  if (a.density) spec.reference_density = *a.density;
  const auto scene = generate_synthetic_scene(spec);
  const fs::path out(a.out);
  for (std::size_t n = 0; n < scene.frames.size(); ++n) {
    const fs::path dir = out / ("node_" + std::to_string(n));
    fs::create_directories(dir);
    for (std::size_t k = 0; k < scene.frames[n].size(); ++k) write_frame(dir / frame_name(k), scene.frames[n][k]);
  }
  write_frame(out / "reference.mvlc", scene.reference);
  std::vector<DetectionRecord> ann;
  for (std::size_t k = 0; k < scene.boxes.size(); ++k) {
    for (const auto& b : scene.boxes[k]) ann.push_back({static_cast<int>(k), b});
  }
  write_detections(out / "annotations.jsonl", ann);
  std::vector<CalibrationRecord> truth;
  for (std::size_t n = 0; n < scene.extrinsics.size(); ++n) {
    truth.push_back({static_cast<int>(n), scene.extrinsics[n], 1.0, 0.0});
  }
  write_file_atomic(out / "extrinsics.jsonl", format_calibrations(truth));
  std::printf("wrote %zu nodes x %d frames, %zu reference points, %zu annotations to %s\n", scene.frames.size(),
              spec.frame_count, scene.reference.size(), ann.size(), out.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  std::vector<std::string> node_dirs;
  std::string reference;
  std::string out;
  std::string config;
  std::string truth;
  double duration = 10.0;
  std::uint64_t seed = 1;
};

int cmd_calibrate(const CalibrateArgs& a) {
  CalibrationSection cal;
  if (!a.config.empty()) cal = load_config_file<CalibrationSection>(a.config);
  cal.duration_s = a.duration;
  cal.hierarchy.seed = a.seed;
  cal.hierarchy.validate();
  std::map<std::uint16_t, RigidTransform> truth;
  if (!a.truth.empty()) {
    const auto records = parse_calibrations(read_file(a.truth));
    truth = extrinsic_map(records);
  }
  SyntheticScene scene;
  scene.reference = read_frame(a.reference);
  std::vector<int> ids;
  for (std::size_t i = 0; i < a.node_dirs.size(); ++i) {
    scene.frames.push_back(read_frame_dir(a.node_dirs[i]));
    ids.push_back(node_id_of(scene.frames.back(), static_cast<int>(i)));
  }
  std::vector<CalibrationRecord> records;
  bool failed = false;
  std::printf("node  fitness  rmse_m   iters  rot_err_deg  trans_err_m  status\n");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto row = calibrate_node(scene, i, ids[i], cal);
    records.push_back({row.node_id, row.result.transform, row.result.fitness, row.result.inlier_rmse});
    failed = failed || row.failed;
    std::printf("%-5d %7.4f  %7.4f  %5d  ", row.node_id, row.result.fitness, row.result.inlier_rmse,
                row.result.iterations_used);
    const auto it = truth.find(static_cast<std::uint16_t>(row.node_id));
    if (it != truth.end()) {
      std::printf("%11.4f  %11.4f  ", rotation_error(row.result.transform, it->second) * 180.0 / kPi,
                  translation_error(row.result.transform, it->second));
    } else {
      std::printf("%11s  %11s  ", "-", "-");
    }
    std::printf("%s\n", row.failed ? "FAILED" : "ok");
  }
  write_file_atomic(a.out, format_calibrations(records));
  if (failed) throw Error(ErrorKind::kCalibrationFailed, "fitness below threshold for at least one node");
  return 0;
}

// ---------------------------------------------------------------------------

struct SyncArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_sync(const SyncArgs& a) {
  SessionConfig cfg;
  if (!a.config.empty()) cfg = load_config_file<SessionConfig>(a.config);
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  const auto trace = simulate_session(cfg);
  const auto report = compute_time_error_report(trace);
  const auto table = format_sync_table(report);
  if (a.out.empty()) {
    std::fputs(table.c_str(), stdout);
  } else {
    write_file_atomic(a.out, table);
  }
  std::fprintf(stderr, "node  start_pps  retransmissions  max_abs_us  mean_abs_us\n");
  for (const auto& s : report.stats) {
    const auto& n = trace.nodes[static_cast<std::size_t>(s.node)];
    std::fprintf(stderr, "%-5d %-10lld %-16d %10.3f  %11.3f\n", s.node, static_cast<long long>(n.start_pps_index),
                 n.retransmissions, s.max_abs_s * 1e6, s.mean_abs_s * 1e6);
  }
  std::fprintf(stderr, "start edges %s\n", report.start_misaligned ? "MISALIGNED" : "aligned");
  return 0;
}

// ---------------------------------------------------------------------------

struct FuseArgs {
  std::string calib;
  std::vector<std::string> node_dirs;
  std::string out;
  double window_ms = 5.0;
};

int cmd_fuse(const FuseArgs& a) {
  const auto ext = extrinsic_map(parse_calibrations(read_file(a.calib)));
  std::vector<std::vector<PointCloud>> frames;
  std::vector<std::uint16_t> ids;
  for (std::size_t i = 0; i < a.node_dirs.size(); ++i) {
    frames.push_back(read_frame_dir(a.node_dirs[i]));
    ids.push_back(static_cast<std::uint16_t>(node_id_of(frames.back(), static_cast<int>(i))));
  }
  std::size_t count = frames.front().size();
  for (const auto& f : frames) count = std::min(count, f.size());
  fs::create_directories(a.out);
  for (std::size_t k = 0; k < count; ++k) {
    ViewFrameSet set;
    set.sync_window_ns = static_cast<std::int64_t>(a.window_ms * 1e6);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      set.frames[ids[i]] = frames[i][k];
      const auto it = ext.find(ids[i]);
      if (it == ext.end()) throw Error(ErrorKind::kBadRecord, "no calibration for node " + std::to_string(ids[i]));
      set.extrinsics[ids[i]] = it->second;
    }
    write_frame(fs::path(a.out) / frame_name(k), early_fuse(set));
  }
  std::printf("fused %zu frames from %zu nodes\n", count, ids.size());
  return 0;
}

// ---------------------------------------------------------------------------

struct DetectArgs {
  std::string frames;
  std::string out;
  std::string config;
  std::uint64_t seed = 1;
};

int cmd_detect(const DetectArgs& a) {
  DetectorConfig cfg;
  if (!a.config.empty()) cfg = load_config_file<DetectorConfig>(a.config);
  cfg.seed = a.seed;
  cfg.validate();
  std::vector<fs::path> files;
  if (fs::is_directory(a.frames)) {
    files = frame_files(a.frames);
  } else {
    files.push_back(a.frames);
  }
  std::vector<DetectionRecord> out;
  for (std::size_t k = 0; k < files.size(); ++k) {
    for (const auto& b : detect_frame(read_frame(files[k]), cfg).boxes) out.push_back({static_cast<int>(k), b});
  }
  write_detections(a.out, out);
  std::printf("%zu detections over %zu frames\n", out.size(), files.size());
  return 0;
}

// ---------------------------------------------------------------------------

struct TrackArgs {
  std::string detections;
  std::string out;
  std::string config;
  double dt = 0.1;
};

int cmd_track(const TrackArgs& a) {
  TrackerConfig cfg;
  if (!a.config.empty()) cfg = load_config_file<TrackerConfig>(a.config);
  cfg.validate();
  const auto records = read_detections(a.detections);
  int frames = 0;
  for (const auto& r : records) {
    if (r.frame < 0) throw Error(ErrorKind::kBadRecord, "negative frame index");
    frames = std::max(frames, r.frame + 1);
  }
  std::vector<std::vector<Box3D>> per_frame(static_cast<std::size_t>(frames));
  for (const auto& r : records) {
    Box3D b = r.box;
    b.track_id.reset();
    per_frame[static_cast<std::size_t>(r.frame)].push_back(b);
  }
  const auto tracks = track_sequence(per_frame, cfg, a.dt);
  write_detections(a.out, trajectory_records(tracks));
  std::printf("%zu tracks over %d frames\n", tracks.size(), frames);
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalDetArgs {
  std::string detections;
  std::string ground_truth;
  std::string config;
  std::optional<double> threshold;
};

int cmd_eval_det(const EvalDetArgs& a) {
  DetectionEvalConfig cfg;
  if (!a.config.empty()) cfg = load_config_file<DetectionEvalConfig>(a.config);
  if (a.threshold) cfg = DetectionEvalConfig::uniform(*a.threshold);
  cfg.validate();
  std::vector<FrameBox> dets, gt;
  for (const auto& r : read_detections(a.detections)) dets.push_back({r.frame, r.box});
  for (const auto& r : read_detections(a.ground_truth)) gt.push_back({r.frame, r.box});
  const auto scores = score_detections(dets, gt, cfg);
  std::printf("class        threshold  AP       recall\n");
  for (const auto& [c, ap] : scores.ap) {
    std::printf("%-12s %9.2f  %7.4f  %7.4f\n", to_string(c), cfg.threshold(c), ap, scores.recall.at(c));
  }
  std::printf("mAP %.4f\n", scores.mean_ap);
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalMotArgs {
  std::string hypotheses;
  std::string ground_truth;
  std::string config;
};

int cmd_eval_mot(const EvalMotArgs& a) {
  MotEvalConfig cfg;
  if (!a.config.empty()) cfg = load_config_file<MotEvalConfig>(a.config);
  cfg.validate();
  const auto hyp = trajectories_from_records(read_detections(a.hypotheses));
  const auto gt = trajectories_from_records(read_detections(a.ground_truth));
  const auto r = compute_clear_mot(hyp, gt, cfg);
  std::printf("MOTA %.4f\nMOTP %.4f\nIDS %lld\nFRAG %lld\nFN %lld\nFP %lld\nGT %lld\n", r.mota, r.motp,
              static_cast<long long>(r.ids), static_cast<long long>(r.frag), static_cast<long long>(r.fn),
              static_cast<long long>(r.fp), static_cast<long long>(r.gt));
  return 0;
}

// ---------------------------------------------------------------------------

struct PipelineArgs {
  std::string config;
  std::string out;
};

int cmd_pipeline(const PipelineArgs& a) {
  const auto cfg = load_pipeline_config(a.config);
  const auto res = run_pipeline(cfg, &std::cerr);
  write_pipeline_outputs(a.out, cfg, res);
  std::fputs(format_report_text(res).c_str(), stdout);
  for (const auto& row : res.calibration) {
    if (row.failed) {
      throw Error(ErrorKind::kCalibrationFailed, "node " + std::to_string(row.node_id) + " fitness below threshold");
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct ConvertArgs {
  std::string in;
  std::string out;
};

int cmd_convert(const ConvertArgs& a) {
  const auto in_ext = fs::path(a.in).extension();
  const auto out_ext = fs::path(a.out).extension();
  PointCloud cloud;
  if (in_ext == ".mvlc") {
    cloud = read_frame(a.in);
  } else if (in_ext == ".xyz") {
    cloud = parse_xyz(read_file(a.in));
  } else {
    throw Error(ErrorKind::kConfigInvalid, "input must be .mvlc or .xyz");
  }
  if (out_ext == ".mvlc") {
    write_frame(a.out, cloud);
  } else if (out_ext == ".xyz") {
    write_file_atomic(a.out, format_xyz(cloud));
  } else {
    throw Error(ErrorKind::kConfigInvalid, "output must be .mvlc or .xyz");
  }
  std::printf("%zu points\n", cloud.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mvlk: multi-view LiDAR calibration, sync, fusion, detection and tracking"};
  app.require_subcommand(1);
  int rc = 0;

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic scene to disk");
  g->add_option("--kind", gen.kind, "crossroad, walkers or calibration")->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--frames", gen.frames)->capture_default_str()->check(CLI::PositiveNumber);
  g->add_option("--points", gen.points, "points per frame")->capture_default_str()->check(CLI::PositiveNumber);
  g->add_option("--noise", gen.noise, "range noise sigma (m)")->capture_default_str();
  g->add_option("--reference-density", gen.density, "reference points per square metre");
  g->add_option("--out", gen.out)->required();
  g->callback([&] { rc = cmd_generate(gen); });

  CalibrateArgs cal;
  auto* c = app.add_subcommand("calibrate", "Register each node's accumulated frames to a reference");
  c->add_option("--node-dir", cal.node_dirs, "directory of .mvlc frames (repeatable)")->required();
  c->add_option("--reference", cal.reference)->required();
  c->add_option("--out", cal.out)->required();
  c->add_option("--config", cal.config, "calibration section JSON");
  c->add_option("--truth", cal.truth, "known extrinsics to report errors against");
  c->add_option("--duration", cal.duration, "accumulation window (s)")->capture_default_str();
  c->add_option("--seed", cal.seed)->capture_default_str();
  c->callback([&] { rc = cmd_calibrate(cal); });

  SyncArgs sync;
  auto* s = app.add_subcommand("sync-sim", "Simulate a triggered capture session");
  s->add_option("--config", sync.config, "session config JSON");
  s->add_option("--out", sync.out, "per-frame error table (CSV); stdout if omitted");
  s->add_option("--seed", sync.seed);
  s->callback([&] { rc = cmd_sync(sync); });

  FuseArgs fuse;
  auto* f = app.add_subcommand("fuse", "Early-fuse synchronized frames into the world frame");
  f->add_option("--calib", fuse.calib)->required();
  f->add_option("--node-dir", fuse.node_dirs, "directory of .mvlc frames (repeatable)")->required();
  f->add_option("--out", fuse.out)->required();
  f->add_option("--sync-window-ms", fuse.window_ms)->capture_default_str();
  f->callback([&] { rc = cmd_fuse(fuse); });

  DetectArgs det;
  auto* d = app.add_subcommand("detect", "Detect objects in frames");
  d->add_option("--frames", det.frames, ".mvlc file or directory")->required();
  d->add_option("--out", det.out)->required();
  d->add_option("--config", det.config, "detector JSON");
  d->add_option("--seed", det.seed)->capture_default_str();
  d->callback([&] { rc = cmd_detect(det); });

  TrackArgs trk;
  auto* t = app.add_subcommand("track", "Track detections over frames");
  t->add_option("--detections", trk.detections)->required();
  t->add_option("--out", trk.out)->required();
  t->add_option("--config", trk.config, "tracker JSON");
  t->add_option("--dt", trk.dt, "frame period (s)")->capture_default_str()->check(CLI::PositiveNumber);
  t->callback([&] { rc = cmd_track(trk); });

  EvalDetArgs ed;
  auto* e1 = app.add_subcommand("eval-det", "Average precision of detections");
  e1->add_option("--detections", ed.detections)->required();
  e1->add_option("--ground-truth", ed.ground_truth)->required();
  e1->add_option("--config", ed.config, "detection eval JSON");
  e1->add_option("--threshold", ed.threshold, "same IoU threshold for every class");
  e1->callback([&] { rc = cmd_eval_det(ed); });

  EvalMotArgs em;
  auto* e2 = app.add_subcommand("eval-mot", "CLEAR MOT metrics of trajectories");
  e2->add_option("--hypotheses", em.hypotheses)->required();
  e2->add_option("--ground-truth", em.ground_truth)->required();
  e2->add_option("--config", em.config, "MOT eval JSON");
  e2->callback([&] { rc = cmd_eval_mot(em); });

  PipelineArgs pipe;
  auto* p = app.add_subcommand("pipeline", "Run the full chain from a config");
  p->add_option("--config", pipe.config)->required();
  p->add_option("--out", pipe.out)->required();
  p->callback([&] { rc = cmd_pipeline(pipe); });

  ConvertArgs conv;
  auto* cv = app.add_subcommand("convert", "Convert between .mvlc and ASCII .xyz");
  cv->add_option("--in", conv.in)->required();
  cv->add_option("--out", conv.out)->required();
  cv->callback([&] { rc = cmd_convert(conv); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 4;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return rc;
}
