/*
 * mvlk - multi-view LiDAR toolkit
 *
 * View-group, fusion and tracking experiments over a synthetic scene, and
 * their table-shaped reports.
 */

#ifndef MVLK_EXPERIMENTS_HPP
#define MVLK_EXPERIMENTS_HPP

#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvlk/detector.hpp"
#include "mvlk/eval.hpp"
#include "mvlk/fusion.hpp"
#include "mvlk/parallel.hpp"
#include "mvlk/scene.hpp"
#include "mvlk/tracking.hpp"

namespace mvlk {

struct ExperimentConfig {
  DetectorConfig detector;
  DetectionEvalConfig eval;
  /// Late fusion groups boxes overlapping by at least this much.
  double late_fusion_threshold = 0.1;
  OverlapMetric late_fusion_metric = OverlapMetric::kIou3d;
  bool average_score_weighted = false;
};

/// Every k-subset of {0, .., n-1} in lexicographic order.
inline std::vector<std::vector<int>> view_subsets(int n, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  auto rec = [&](auto&& self, int next) -> void {
    if (static_cast<int>(cur.size()) == k) {
      out.push_back(cur);
      return;
    }
    for (int i = next; i < n; ++i) {
      cur.push_back(i);
      self(self, i + 1);
      cur.pop_back();
    }
  };
  if (k >= 0 && k <= n) rec(rec, 0);
  return out;
}

inline std::vector<FrameBox> ground_truth_boxes(const SyntheticScene& scene) {
  std::vector<FrameBox> out;
  for (std::size_t k = 0; k < scene.boxes.size(); ++k) {
    for (const auto& b : scene.boxes[k]) out.push_back({static_cast<int>(k), b});
  }
  return out;
}

/// Early fusion of the given views at frame `k` followed by detection.
/// Boxes are in the world frame.
inline std::vector<Box3D> detect_fused(const SyntheticScene& scene, std::span<const RigidTransform> extrinsics,
                                       std::span<const int> views, int k, const DetectorConfig& cfg) {
  ViewFrameSet set;
  set.sync_window_ns = INT64_MAX;
  for (int v : views) {
    set.frames[static_cast<std::uint16_t>(v)] = scene.frames[v][k];
    set.extrinsics[static_cast<std::uint16_t>(v)] = extrinsics[v];
  }
  return detect_frame(early_fuse(set), cfg).boxes;
}

/// Detections for every frame, computed in parallel.
inline std::vector<FrameBox> detect_sequence(const SyntheticScene& scene, std::span<const RigidTransform> extrinsics,
                                             std::span<const int> views, const DetectorConfig& cfg) {
  const auto frames = scene.boxes.size();
  std::vector<std::vector<Box3D>> per(frames);
  parallel_for(frames, [&](std::size_t k) {
    per[k] = detect_fused(scene, extrinsics, views, static_cast<int>(k), cfg);
  }, 1);
  std::vector<FrameBox> out;
  for (std::size_t k = 0; k < frames; ++k) {
    for (const auto& b : per[k]) out.push_back({static_cast<int>(k), b});
  }
  return out;
}

/// Memoized detections per view subset, so experiments sharing a subset
/// run the detector once.
class DetectionCache {
 public:
  DetectionCache(const SyntheticScene& scene, std::vector<RigidTransform> extrinsics, DetectorConfig cfg)
      : scene_(scene), extrinsics_(std::move(extrinsics)), cfg_(std::move(cfg)) {}

  const std::vector<FrameBox>& get(const std::vector<int>& views) {
    auto it = cache_.find(views);
    if (it == cache_.end()) it = cache_.emplace(views, detect_sequence(scene_, extrinsics_, views, cfg_)).first;
    return it->second;
  }

  const SyntheticScene& scene() const { return scene_; }

 private:
  const SyntheticScene& scene_;
  std::vector<RigidTransform> extrinsics_;
  DetectorConfig cfg_;
  std::map<std::vector<int>, std::vector<FrameBox>> cache_;
};

/// Splits frame-tagged boxes into one vector per frame.
inline std::vector<std::vector<Box3D>> boxes_per_frame(std::span<const FrameBox> boxes, std::size_t frames) {
  std::vector<std::vector<Box3D>> out(frames);
  for (const auto& f : boxes) out.at(static_cast<std::size_t>(f.frame)).push_back(f.box);
  return out;
}

struct DetectionScores {
  std::map<ObjectClass, double> ap;      // classes with ground truth only
  std::map<ObjectClass, double> recall;
  double mean_ap = 0.0;
  double recall_all = 0.0;  // pooled over classes
  int true_positives = 0;
  int ground_truth = 0;
};

inline DetectionScores score_detections(std::span<const FrameBox> detections, std::span<const FrameBox> gt,
                                        const DetectionEvalConfig& cfg) {
  DetectionScores s;
  int classes = 0;
  for (auto c : kAllClasses) {
    const bool any = std::any_of(gt.begin(), gt.end(), [&](const FrameBox& f) { return f.box.class_label == c; });
    if (!any) continue;
    const auto r = compute_ap_detailed(detections, gt, c, cfg);
    s.ap[c] = r.ap;
    s.recall[c] = static_cast<double>(r.true_positives) / r.ground_truth;
    s.mean_ap += r.ap;
    s.true_positives += r.true_positives;
    s.ground_truth += r.ground_truth;
    ++classes;
  }
  if (classes == 0) throw Error(ErrorKind::kNoGroundTruth, "scene has no ground-truth boxes");
  s.mean_ap /= classes;
  s.recall_all = static_cast<double>(s.true_positives) / s.ground_truth;
  return s;
}

struct ViewGroupRow {
  int views = 0;
  int subsets = 0;
  /// Scores averaged over every subset of this size.
  std::map<ObjectClass, double> ap;
  std::map<ObjectClass, double> recall;
  double mean_ap = 0.0;
  double recall_all = 0.0;
};

/// Detection quality as a function of the number of early-fused views,
/// averaged over all view subsets of each size.
inline std::vector<ViewGroupRow> view_count_experiment(DetectionCache& cache, std::span<const int> view_counts,
                                                       const ExperimentConfig& cfg) {
  const auto& scene = cache.scene();
  const auto gt = ground_truth_boxes(scene);
  const int nodes = static_cast<int>(scene.frames.size());
  std::vector<ViewGroupRow> rows;
  for (int v : view_counts) {
    ViewGroupRow row;
    row.views = v;
    const auto subsets = view_subsets(nodes, v);
    if (subsets.empty()) throw Error(ErrorKind::kConfigInvalid, "view count exceeds node count");
    for (const auto& sub : subsets) {
      const auto s = score_detections(cache.get(sub), gt, cfg.eval);
      for (auto [c, a] : s.ap) row.ap[c] += a;
      for (auto [c, r] : s.recall) row.recall[c] += r;
      row.mean_ap += s.mean_ap;
      row.recall_all += s.recall_all;
    }
    row.subsets = static_cast<int>(subsets.size());
    const double n = row.subsets;
    for (auto& [c, a] : row.ap) a /= n;
    for (auto& [c, r] : row.recall) r /= n;
    row.mean_ap /= n;
    row.recall_all /= n;
    rows.push_back(row);
  }
  return rows;
}

struct FusionRow {
  std::string method;
  DetectionScores scores;
};

/// Single views, late fusion (NMS and average) of the per-view detections,
/// and early fusion of all views.
inline std::vector<FusionRow> fusion_experiment(DetectionCache& cache, const ExperimentConfig& cfg) {
  const auto& scene = cache.scene();
  const auto gt = ground_truth_boxes(scene);
  const int nodes = static_cast<int>(scene.frames.size());
  const auto frames = static_cast<int>(scene.boxes.size());
  std::vector<FusionRow> rows;
  std::vector<std::vector<FrameBox>> per_view(nodes);
  for (int v = 0; v < nodes; ++v) {
    per_view[v] = cache.get({v});
    rows.push_back({"view " + std::to_string(v), score_detections(per_view[v], gt, cfg.eval)});
  }
  std::vector<FrameBox> nms, avg;
  for (int k = 0; k < frames; ++k) {
    std::vector<ViewDetections> views(nodes);
    for (int v = 0; v < nodes; ++v) {
      views[v].view_id = v;
      for (const auto& f : per_view[v]) {
        if (f.frame == k) views[v].boxes.push_back(f.box);
      }
    }
    const auto clusters = cluster_boxes(views, cfg.late_fusion_threshold, cfg.late_fusion_metric);
    for (const auto& b : nms_fuse(clusters)) nms.push_back({k, b});
    for (const auto& b : average_fuse(clusters, cfg.average_score_weighted)) avg.push_back({k, b});
  }
  rows.push_back({"late-nms", score_detections(nms, gt, cfg.eval)});
  rows.push_back({"late-average", score_detections(avg, gt, cfg.eval)});
  std::vector<int> all(nodes);
  std::iota(all.begin(), all.end(), 0);
  rows.push_back({"early", score_detections(cache.get(all), gt, cfg.eval)});
  return rows;
}

struct SyntheticDetectorConfig {
  int min_visible_points = 10;
  double dropout = 0.1;
  double center_sigma = 0.05;
  std::uint64_t seed = 0;
};

/// Per-view detections drawn from ground truth: an object is reported by a
/// view when enough of its surface is visible from it, minus random
/// dropout, with jittered centers. Result is [view][frame].
inline std::vector<std::vector<std::vector<Box3D>>> synthetic_view_detections(const SyntheticScene& scene,
                                                                              const SyntheticDetectorConfig& cfg) {
  const auto nodes = scene.frames.size();
  const auto frames = scene.boxes.size();
  std::vector<std::vector<std::vector<Box3D>>> out(nodes, std::vector<std::vector<Box3D>>(frames));
  for (std::size_t v = 0; v < nodes; ++v) {
    std::mt19937_64 rng(detail::mix_seed(cfg.seed, 0xDE7ull, v));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t k = 0; k < frames; ++k) {
      for (const auto& gt : scene.boxes[k]) {
        const double drop = u(rng);
        const Eigen::Vector3d jitter(n(rng), n(rng), 0.0);
        if (scene.visible[v][k][static_cast<std::size_t>(*gt.track_id)] < cfg.min_visible_points) continue;
        if (drop < cfg.dropout) continue;
        Box3D b = gt;
        b.track_id.reset();
        b.center += cfg.center_sigma * jitter;
        b.score = std::min(1.0, scene.visible[v][k][static_cast<std::size_t>(*gt.track_id)] / 200.0);
        out[v][k].push_back(b);
      }
    }
  }
  return out;
}

struct TrackingRow {
  std::string input;
  MotReport report;
};

/// Tracks each single view and the NMS late fusion of all views, scoring
/// every run against the ground-truth trajectories.
inline std::vector<TrackingRow> tracking_experiment(const SyntheticScene& scene,
                                                    const std::vector<std::vector<std::vector<Box3D>>>& per_view,
                                                    const TrackerConfig& tracker, const MotEvalConfig& mot,
                                                    double fusion_threshold = 0.1,
                                                    OverlapMetric fusion_metric = OverlapMetric::kIou3d) {
  const auto nodes = per_view.size();
  const auto frames = scene.boxes.size();
  const double dt = 0.1;
  std::vector<TrackingRow> rows;
  for (std::size_t v = 0; v < nodes; ++v) {
    const auto tracks = track_sequence(per_view[v], tracker, dt);
    rows.push_back({"view " + std::to_string(v), compute_clear_mot(tracks, scene.trajectories, mot)});
  }
  std::vector<std::vector<Box3D>> fused(frames);
  for (std::size_t k = 0; k < frames; ++k) {
    std::vector<ViewDetections> views(nodes);
    for (std::size_t v = 0; v < nodes; ++v) {
      views[v].view_id = static_cast<int>(v);
      views[v].boxes = per_view[v][k];
    }
    fused[k] = nms_fuse(cluster_boxes(views, fusion_threshold, fusion_metric));
  }
  const auto tracks = track_sequence(fused, tracker, dt);
  rows.push_back({"four views", compute_clear_mot(tracks, scene.trajectories, mot)});
  return rows;
}

/// Tracking on real detector output: every single view and the early
/// fusion of all views.
inline std::vector<TrackingRow> detector_tracking_experiment(DetectionCache& cache, const TrackerConfig& tracker,
                                                             const MotEvalConfig& mot, double dt = 0.1) {
  const auto& scene = cache.scene();
  const int nodes = static_cast<int>(scene.frames.size());
  const auto frames = scene.boxes.size();
  std::vector<TrackingRow> rows;
  auto run = [&](const std::vector<int>& views, std::string name) {
    const auto per_frame = boxes_per_frame(cache.get(views), frames);
    rows.push_back({std::move(name), compute_clear_mot(track_sequence(per_frame, tracker, dt), scene.trajectories, mot)});
  };
  for (int v = 0; v < nodes; ++v) run({v}, "view " + std::to_string(v));
  std::vector<int> all(nodes);
  std::iota(all.begin(), all.end(), 0);
  run(all, std::to_string(nodes) + " views");
  return rows;
}

}  // namespace mvlk

#endif  // MVLK_EXPERIMENTS_HPP
