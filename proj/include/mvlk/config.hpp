/*
 * mvlk - multi-view LiDAR toolkit
 *
 * JSON configuration: every tunable struct lists its fields once in a
 * visit_fields overload, which drives both strict reading (unknown keys and
 * wrong types are config errors) and writing of the resolved config.
 */

#ifndef MVLK_CONFIG_HPP
#define MVLK_CONFIG_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "mvlk/detector.hpp"
#include "mvlk/error.hpp"
#include "mvlk/eval.hpp"
#include "mvlk/experiments.hpp"
#include "mvlk/io.hpp"
#include "mvlk/registration.hpp"
#include "mvlk/syncsim.hpp"
#include "mvlk/tracking.hpp"

namespace mvlk {

// ---------------------------------------------------------------------------
// Pipeline description
// ---------------------------------------------------------------------------

struct SceneSection {
  /// "crossroad" generates the standard synthetic scene, "files" reads the
  /// inputs section.
  std::string kind = "crossroad";
  int frames = 20;
  int points_per_frame = 8000;
  double noise_sigma = 0.02;
  double reference_density = 400.0;
};

struct NodeInput {
  int id = 0;
  std::filesystem::path frames;  // directory of .mvlc frames
};

struct InputSection {
  std::vector<NodeInput> nodes;
  std::filesystem::path reference;    // .mvlc, world frame
  std::filesystem::path annotations;  // JSON-lines with track_id, optional
};

struct CalibrationSection {
  double duration_s = 10.0;
  HierarchyConfig hierarchy;

  CalibrationSection() { hierarchy.target_viewpoint = Point3(0.0, 0.0, 3.0); }
};

struct FusionSection {
  double late_threshold = 0.1;
  OverlapMetric late_metric = OverlapMetric::kIou3d;
  bool average_score_weighted = false;
  std::vector<int> view_counts = {1, 2, 4};
};

struct EvalSection {
  DetectionEvalConfig detection;
  MotEvalConfig mot;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  SceneSection scene;
  InputSection inputs;
  CalibrationSection calibration;
  SessionConfig sync;
  DetectorConfig detector;
  FusionSection fusion;
  TrackerConfig tracker;
  EvalSection eval;

  /// Sub-seeds all derive from `seed`.
  void propagate_seed() {
    calibration.hierarchy.seed = seed;
    sync.seed = seed;
    detector.seed = seed;
  }

  ExperimentConfig experiment() const {
    ExperimentConfig e;
    e.detector = detector;
    e.eval = eval.detection;
    e.late_fusion_threshold = fusion.late_threshold;
    e.late_fusion_metric = fusion.late_metric;
    e.average_score_weighted = fusion.average_score_weighted;
    return e;
  }

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::kConfigInvalid, what); };
    if (scene.kind != "crossroad" && scene.kind != "files") bad("scene.kind must be crossroad or files");
    if (scene.kind == "crossroad") {
      if (scene.frames < 1 || scene.points_per_frame < 1) bad("scene frames and points must be positive");
      if (!(scene.noise_sigma >= 0.0) || !(scene.reference_density > 0.0)) bad("scene noise/density out of range");
    } else {
      if (inputs.nodes.empty()) bad("inputs.nodes is empty");
      if (inputs.reference.empty()) bad("inputs.reference is required");
      std::set<int> ids;
      for (const auto& n : inputs.nodes) {
        if (n.id < 0 || n.id >= kNoNode) bad("node id out of range");
        if (!ids.insert(n.id).second) bad("duplicate node id " + std::to_string(n.id));
      }
    }
    if (!(calibration.duration_s > 0.0)) bad("calibration.duration_s must be positive");
    if (!(fusion.late_threshold > 0.0 && fusion.late_threshold < 1.0)) bad("fusion.late_threshold outside (0, 1)");
    for (int v : fusion.view_counts) {
      if (v < 1) bad("view counts must be positive");
    }
    calibration.hierarchy.validate();
    sync.validate();
    detector.validate();
    tracker.validate();
    eval.detection.validate();
    eval.mot.validate();
  }
};

// ---------------------------------------------------------------------------
// Field lists
// ---------------------------------------------------------------------------

template <class F>
void visit_fields(HierarchyLevel& c, F&& f) {
  f("voxel_size", c.voxel_size);
  f("max_correspondence_distance", c.max_correspondence_distance);
  f("max_iterations", c.max_iterations);
  f("target_voxel_size", c.target_voxel_size);
}

template <class F>
void visit_fields(HierarchyConfig& c, F&& f) {
  f("levels", c.levels);
  f("fpfh_radius", c.fpfh_radius);
  f("normal_radius", c.normal_radius);
  f("ransac_iterations", c.ransac_iterations);
  f("ransac_inlier_threshold", c.ransac_inlier_threshold);
  f("convergence_epsilon", c.convergence_epsilon);
  f("edge_length_ratio", c.edge_length_ratio);
  f("ransac_candidates", c.ransac_candidates);
  f("selection_levels", c.selection_levels);
  f("min_normal_neighbors", c.min_normal_neighbors);
  f("min_fitness", c.min_fitness);
  f("reference_viewpoint", c.target_viewpoint);
}

template <class F>
void visit_fields(NodeClockModel& c, F&& f) {
  f("initial_offset_s", c.initial_offset_s);
  f("drift_ppm", c.drift_ppm);
  f("pps_jitter_s", c.pps_jitter_s);
  f("frame_jitter_s", c.frame_jitter_s);
}

template <class F>
void visit_fields(NetworkModel& c, F&& f) {
  f("delay_min_s", c.delay_min_s);
  f("delay_max_s", c.delay_max_s);
  f("drop_probability", c.drop_probability);
  f("retransmit_timeout_s", c.retransmit_timeout_s);
  f("max_retransmissions", c.max_retransmissions);
}

template <class F>
void visit_fields(SessionConfig& c, F&& f) {
  f("node_count", c.node_count);
  f("frame_rate_hz", c.frame_rate_hz);
  f("duration_s", c.duration_s);
  f("sensor", c.sensor);
  f("clocks", c.clocks);
  f("network", c.network);
  f("links", c.links);
  f("align_trigger_phase", c.align_trigger_phase);
  f("trigger_phase", c.trigger_phase);
  f("epoch_s", c.epoch_s);
}

template <class F>
void visit_fields(SizePrior& c, F&& f) {
  f("class", c.class_label);
  f("length", c.length);
  f("width", c.width);
  f("height", c.height);
}

template <class F>
void visit_fields(DetectorConfig& c, F&& f) {
  f("ground_distance_threshold", c.ground_distance_threshold);
  f("ransac_ground_iterations", c.ransac_ground_iterations);
  f("ground_max_tilt_deg", c.ground_max_tilt_deg);
  f("min_ground_fraction", c.min_ground_fraction);
  f("cluster_distance", c.cluster_distance);
  f("min_cluster_points", c.min_cluster_points);
  f("max_object_length", c.max_object_length);
  f("max_object_height", c.max_object_height);
  f("priors", c.priors);
}

template <class F>
void visit_fields(TrackerConfig& c, F&& f) {
  f("metric", c.metric);
  f("threshold", c.threshold);
  f("min_hits", c.min_hits);
  f("max_age", c.max_age);
  f("process_noise_scale", c.process_noise_scale);
  f("measurement_noise_scale", c.measurement_noise_scale);
  f("initial_variance", c.initial_variance);
  f("initial_velocity_variance", c.initial_velocity_variance);
}

template <class F>
void visit_fields(DetectionEvalConfig& c, F&& f) {
  f("iou_threshold", c.iou_threshold);
  f("recall_points", c.recall_points);
  f("metric", c.metric);
}

template <class F>
void visit_fields(MotEvalConfig& c, F&& f) {
  f("metric", c.metric);
  f("threshold", c.threshold);
  f("prefer_previous", c.prefer_previous);
}

template <class F>
void visit_fields(SceneSection& c, F&& f) {
  f("kind", c.kind);
  f("frames", c.frames);
  f("points_per_frame", c.points_per_frame);
  f("noise_sigma", c.noise_sigma);
  f("reference_density", c.reference_density);
}

template <class F>
void visit_fields(NodeInput& c, F&& f) {
  f("id", c.id);
  f("frames", c.frames);
}

template <class F>
void visit_fields(InputSection& c, F&& f) {
  f("nodes", c.nodes);
  f("reference", c.reference);
  f("annotations", c.annotations);
}

template <class F>
void visit_fields(CalibrationSection& c, F&& f) {
  f("duration_s", c.duration_s);
  f("hierarchy", c.hierarchy);
}

template <class F>
void visit_fields(FusionSection& c, F&& f) {
  f("late_threshold", c.late_threshold);
  f("late_metric", c.late_metric);
  f("average_score_weighted", c.average_score_weighted);
  f("view_counts", c.view_counts);
}

template <class F>
void visit_fields(EvalSection& c, F&& f) {
  f("detection", c.detection);
  f("mot", c.mot);
}

template <class F>
void visit_fields(PipelineConfig& c, F&& f) {
  f("seed", c.seed);
  f("scene", c.scene);
  f("inputs", c.inputs);
  f("calibration", c.calibration);
  f("sync", c.sync);
  f("detector", c.detector);
  f("fusion", c.fusion);
  f("tracker", c.tracker);
  f("eval", c.eval);
}

// ---------------------------------------------------------------------------
// Generic conversion
// ---------------------------------------------------------------------------

namespace detail {

template <class E>
struct EnumNames;

template <>
struct EnumNames<SensorKind> {
  static constexpr std::array<std::pair<SensorKind, const char*>, 2> values = {
      {{SensorKind::kLidar, "lidar"}, {SensorKind::kCamera, "camera"}}};
};
template <>
struct EnumNames<OverlapMetric> {
  static constexpr std::array<std::pair<OverlapMetric, const char*>, 2> values = {
      {{OverlapMetric::kIou3d, "iou3d"}, {OverlapMetric::kIouBev, "bev"}}};
};
template <>
struct EnumNames<AssociationMetric> {
  static constexpr std::array<std::pair<AssociationMetric, const char*>, 3> values = {
      {{AssociationMetric::kIou3d, "iou3d"},
       {AssociationMetric::kIouBev, "bev"},
       {AssociationMetric::kCenterDistance, "distance"}}};
};
template <>
struct EnumNames<MotMetric> {
  static constexpr std::array<std::pair<MotMetric, const char*>, 2> values = {
      {{MotMetric::kIou3d, "iou3d"}, {MotMetric::kCenterDistance, "distance"}}};
};
template <>
struct EnumNames<ObjectClass> {
  static constexpr std::array<std::pair<ObjectClass, const char*>, 3> values = {
      {{ObjectClass::kCar, "car"}, {ObjectClass::kCyclist, "cyclist"}, {ObjectClass::kPedestrian, "pedestrian"}}};
};

template <class T>
struct is_vector : std::false_type {};
template <class T>
struct is_vector<std::vector<T>> : std::true_type {};

template <class T>
concept Visitable = requires(T& t) { visit_fields(t, [](const char*, auto&) {}); };

[[noreturn]] inline void config_error(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::kConfigInvalid, (where.empty() ? std::string("config") : where) + ": " + what);
}

template <class E>
const char* enum_name(E e) {
  for (const auto& [v, n] : EnumNames<E>::values) {
    if (v == e) return n;
  }
  return "?";
}

template <class E>
E enum_value(const Json& j, const std::string& where) {
  if (!j.is_string()) config_error(where, "expected a string");
  const auto s = j.get<std::string>();
  for (const auto& [v, n] : EnumNames<E>::values) {
    if (s == n) return v;
  }
  config_error(where, "unknown value '" + s + "'");
}

}  // namespace detail

template <class T>
Json to_config_json(const T& value);

template <class T>
void from_config_json(const Json& j, T& value, const std::string& where);

template <class T>
Json to_config_json(const T& value) {
  if constexpr (std::is_same_v<T, bool> || std::is_arithmetic_v<T> || std::is_same_v<T, std::string>) {
    return Json(value);
  } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
    return Json(value.generic_string());
  } else if constexpr (std::is_enum_v<T>) {
    return Json(detail::enum_name(value));
  } else if constexpr (std::is_same_v<T, Eigen::Vector3d>) {
    return Json::array({value.x(), value.y(), value.z()});
  } else if constexpr (std::is_same_v<T, SizeRange>) {
    return Json::array({value.lo, value.hi});
  } else if constexpr (std::is_same_v<T, std::map<ObjectClass, double>>) {
    Json out = Json::object();
    for (const auto& [c, v] : value) out[detail::enum_name(c)] = v;
    return out;
  } else if constexpr (detail::is_vector<T>::value) {
    Json out = Json::array();
    for (const auto& v : value) out.push_back(to_config_json(v));
    return out;
  } else {
    static_assert(detail::Visitable<T>);
    Json out = Json::object();
    visit_fields(const_cast<T&>(value), [&](const char* key, auto& field) { out[key] = to_config_json(field); });
    return out;
  }
}

template <class T>
void from_config_json(const Json& j, T& value, const std::string& where) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) detail::config_error(where, "expected a boolean");
    value = j.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) detail::config_error(where, "expected an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (!j.is_number_unsigned()) detail::config_error(where, "expected a non-negative integer");
    }
    value = j.get<T>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!j.is_number() || !std::isfinite(j.get<double>())) detail::config_error(where, "expected a finite number");
    value = j.get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) detail::config_error(where, "expected a string");
    value = j.get<std::string>();
  } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
    if (!j.is_string()) detail::config_error(where, "expected a path string");
    value = j.get<std::string>();
  } else if constexpr (std::is_enum_v<T>) {
    value = detail::enum_value<T>(j, where);
  } else if constexpr (std::is_same_v<T, Eigen::Vector3d>) {
    if (!j.is_array() || j.size() != 3) detail::config_error(where, "expected 3 numbers");
    for (int i = 0; i < 3; ++i) from_config_json(j[i], value[i], where + "[" + std::to_string(i) + "]");
  } else if constexpr (std::is_same_v<T, SizeRange>) {
    if (!j.is_array() || j.size() != 2) detail::config_error(where, "expected [lo, hi]");
    from_config_json(j[0], value.lo, where + "[0]");
    from_config_json(j[1], value.hi, where + "[1]");
  } else if constexpr (std::is_same_v<T, std::map<ObjectClass, double>>) {
    if (!j.is_object()) detail::config_error(where, "expected an object keyed by class");
    for (const auto& [k, v] : j.items()) {
      const auto c = detail::enum_value<ObjectClass>(Json(k), where + "." + k);
      from_config_json(v, value[c], where + "." + k);
    }
  } else if constexpr (detail::is_vector<T>::value) {
    if (!j.is_array()) detail::config_error(where, "expected an array");
    value.assign(j.size(), typename T::value_type{});
    for (std::size_t i = 0; i < j.size(); ++i) {
      from_config_json(j[i], value[i], where + "[" + std::to_string(i) + "]");
    }
  } else {
    static_assert(detail::Visitable<T>);
    if (!j.is_object()) detail::config_error(where, "expected an object");
    std::set<std::string> known;
    visit_fields(value, [&](const char* key, auto& field) {
      known.insert(key);
      const auto it = j.find(key);
      if (it != j.end()) from_config_json(*it, field, where.empty() ? std::string(key) : where + "." + key);
    });
    for (const auto& [k, v] : j.items()) {
      if (!known.count(k)) detail::config_error(where, "unknown key '" + k + "'");
    }
  }
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

inline Json pipeline_config_json(const PipelineConfig& cfg) { return to_config_json(cfg); }

/// Hash of the canonical (sorted-key) dump of the resolved config.
inline std::string config_hash(const PipelineConfig& cfg) { return hex64(fnv1a64(pipeline_config_json(cfg).dump())); }

inline Json parse_json_text(std::string_view text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::kConfigInvalid, what + ": " + e.what());
  }
}

/// Parses a pipeline config; relative input paths resolve against
/// `base_dir` and must exist.
inline PipelineConfig parse_pipeline_config(const Json& j, const std::filesystem::path& base_dir = {}) {
  PipelineConfig cfg;
  from_config_json(j, cfg, "");
  cfg.propagate_seed();
  auto resolve = [&](std::filesystem::path& p, const char* what, bool dir) {
    if (p.empty()) return;
    if (p.is_relative()) p = base_dir / p;
    std::error_code ec;
    const bool ok = dir ? std::filesystem::is_directory(p, ec) : std::filesystem::is_regular_file(p, ec);
    if (!ok) throw Error(ErrorKind::kConfigInvalid, std::string(what) + " not found: " + p.string());
  };
  if (cfg.scene.kind == "files") {
    for (auto& n : cfg.inputs.nodes) resolve(n.frames, "node frame directory", true);
    resolve(cfg.inputs.reference, "reference cloud", false);
    resolve(cfg.inputs.annotations, "annotation file", false);
  }
  cfg.validate();
  return cfg;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfigInvalid, e.what());
  }
  return parse_pipeline_config(parse_json_text(text, path.string()), path.parent_path());
}

/// Reads any visitable config section from a standalone JSON file.
template <class T>
T load_config_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfigInvalid, e.what());
  }
  T value;
  from_config_json(parse_json_text(text, path.string()), value, "");
  return value;
}

}  // namespace mvlk

#endif  // MVLK_CONFIG_HPP
