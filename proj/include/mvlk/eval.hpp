/*
 * mvlk - multi-view LiDAR toolkit
 *
 * Detection average precision with class-specific overlap thresholds and
 * CLEAR multi-object tracking metrics.
 */

#ifndef MVLK_EVAL_HPP
#define MVLK_EVAL_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "mvlk/error.hpp"
#include "mvlk/geometry.hpp"
#include "mvlk/hungarian.hpp"
#include "mvlk/tracking.hpp"

namespace mvlk {

/// A box tagged with the frame it belongs to.
struct FrameBox {
  int frame = 0;
  Box3D box;
};

// ---------------------------------------------------------------------------
// Average precision
// ---------------------------------------------------------------------------

struct DetectionEvalConfig {
  std::map<ObjectClass, double> iou_threshold = {
      {ObjectClass::kCar, 0.70}, {ObjectClass::kCyclist, 0.50}, {ObjectClass::kPedestrian, 0.50}};
  int recall_points = 40;  // 40: k/40 for k = 1..40; 11: k/10 for k = 0..10
  OverlapMetric metric = OverlapMetric::kIou3d;

  /// Same thresholds for every class (the AP_25 / AP_50 / AP_70 variants).
  static DetectionEvalConfig uniform(double threshold) {
    DetectionEvalConfig cfg;
    for (auto& [cls, t] : cfg.iou_threshold) t = threshold;
    return cfg;
  }

  double threshold(ObjectClass c) const {
    const auto it = iou_threshold.find(c);
    return it == iou_threshold.end() ? 0.5 : it->second;
  }

  void validate() const {
    for (const auto& [cls, t] : iou_threshold) {
      if (!(t > 0.0 && t <= 1.0)) throw Error(ErrorKind::kConfigInvalid, "IoU threshold outside (0, 1]");
    }
    if (recall_points != 40 && recall_points != 11) {
      throw Error(ErrorKind::kConfigInvalid, "recall_points must be 40 or 11");
    }
  }
};

/// Recall sample points for interpolated AP.
inline std::vector<double> recall_samples(int points) {
  std::vector<double> r;
  if (points == 11) {
    for (int k = 0; k <= 10; ++k) r.push_back(static_cast<double>(k) / 10.0);
  } else {
    for (int k = 1; k <= points; ++k) r.push_back(static_cast<double>(k) / points);
  }
  return r;
}

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct ApResult {
  double ap = 0.0;
  std::vector<PrPoint> curve;  // one point per distinct score cutoff
  int true_positives = 0;      // at the lowest cutoff
  int ground_truth = 0;
};

/// Interpolated AP from operating points: mean over recall samples of the
/// best precision at recall >= sample.
inline double interpolated_ap(std::span<const PrPoint> curve, int recall_points) {
  const auto samples = recall_samples(recall_points);
  double sum = 0.0;
  for (double r : samples) {
    double best = 0.0;
    for (const auto& p : curve) {
      if (p.recall >= r) best = std::max(best, p.precision);
    }
    sum += best;
  }
  return sum / static_cast<double>(samples.size());
}

/// Detections are taken in descending score order (input order on ties) and
/// greedily matched to the highest-overlap unmatched ground truth of the
/// same frame and class. Operating points are emitted at every distinct
/// score.
inline ApResult compute_ap_detailed(std::span<const FrameBox> detections,
                                    std::span<const FrameBox> ground_truth, ObjectClass cls,
                                    const DetectionEvalConfig& cfg) {
  cfg.validate();
  const double thr = cfg.threshold(cls);
  std::map<int, std::vector<std::size_t>> gt_by_frame;
  int n_gt = 0;
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    if (ground_truth[i].box.class_label != cls) continue;
    gt_by_frame[ground_truth[i].frame].push_back(i);
    ++n_gt;
  }
  if (n_gt == 0) throw Error(ErrorKind::kNoGroundTruth, std::string("no ground truth for ") + to_string(cls));

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (detections[i].box.class_label == cls) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].box.score > detections[b].box.score;
  });

  std::vector<char> gt_used(ground_truth.size(), 0);
  ApResult result;
  result.ground_truth = n_gt;
  int tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& det = detections[order[k]];
    double best = -1.0;
    std::size_t best_gt = SIZE_MAX;
    if (auto it = gt_by_frame.find(det.frame); it != gt_by_frame.end()) {
      for (auto g : it->second) {
        if (gt_used[g]) continue;
        const double o = overlap(cfg.metric, det.box, ground_truth[g].box);
        if (o > best) {
          best = o;
          best_gt = g;
        }
      }
    }
    if (best_gt != SIZE_MAX && best >= thr) {
      gt_used[best_gt] = 1;
      ++tp;
    } else {
      ++fp;
    }
    const bool group_end = k + 1 == order.size() ||
                           detections[order[k + 1]].box.score != det.box.score;
    if (group_end) {
      result.curve.push_back({static_cast<double>(tp) / n_gt, static_cast<double>(tp) / (tp + fp)});
    }
  }
  result.true_positives = tp;
  result.ap = interpolated_ap(result.curve, cfg.recall_points);
  return result;
}

inline double compute_ap(std::span<const FrameBox> detections, std::span<const FrameBox> ground_truth,
                         ObjectClass cls, const DetectionEvalConfig& cfg = DetectionEvalConfig{}) {
  return compute_ap_detailed(detections, ground_truth, cls, cfg).ap;
}

/// Fraction of ground-truth boxes of `cls` matched by any detection (no
/// score cutoff).
inline double compute_recall(std::span<const FrameBox> detections, std::span<const FrameBox> ground_truth,
                             ObjectClass cls, const DetectionEvalConfig& cfg = DetectionEvalConfig{}) {
  const auto r = compute_ap_detailed(detections, ground_truth, cls, cfg);
  return static_cast<double>(r.true_positives) / r.ground_truth;
}

// ---------------------------------------------------------------------------
// CLEAR MOT
// ---------------------------------------------------------------------------

enum class MotMetric { kIou3d, kCenterDistance };

struct MotEvalConfig {
  MotMetric metric = MotMetric::kIou3d;
  /// Minimum IoU, or maximum center distance in metres.
  double threshold = 0.25;
  bool prefer_previous = true;

  void validate() const {
    if (metric == MotMetric::kIou3d ? !(threshold > 0.0 && threshold <= 1.0) : !(threshold > 0.0)) {
      throw Error(ErrorKind::kConfigInvalid, "MOT match threshold out of range");
    }
  }
};

struct MotReport {
  double mota = 0.0;
  double motp = 0.0;  // mean matched IoU (or mean matched distance)
  std::int64_t ids = 0;
  std::int64_t frag = 0;
  std::int64_t fn = 0;
  std::int64_t fp = 0;
  std::int64_t gt = 0;
  std::int64_t matches = 0;
};

namespace detail {

struct MotEntry {
  std::int64_t id;
  Box3D box;
};

inline std::map<int, std::vector<MotEntry>> by_frame(const TrajectorySet& set) {
  std::map<int, std::vector<MotEntry>> out;
  for (const auto& [id, traj] : set) {
    for (const auto& p : traj) out[p.frame].push_back({id, p.box});
  }
  return out;
}

/// Match quality: IoU for the overlap metric, distance for the distance
/// metric.
inline double mot_similarity(const MotEvalConfig& cfg, const Box3D& a, const Box3D& b) {
  return cfg.metric == MotMetric::kIou3d ? iou_3d(a, b) : (a.center - b.center).norm();
}

inline bool mot_valid(const MotEvalConfig& cfg, const Box3D& a, const Box3D& b, double sim) {
  if (a.class_label != b.class_label) return false;
  return cfg.metric == MotMetric::kIou3d ? sim >= cfg.threshold : sim <= cfg.threshold;
}

/// Assignment weight (>0 for valid pairs, 0 otherwise).
inline double mot_weight(const MotEvalConfig& cfg, double sim) {
  return cfg.metric == MotMetric::kIou3d ? sim : cfg.threshold - sim + 1e-12;
}

}  // namespace detail

/// CLEAR MOT. Per frame: previous-frame pairs still valid are kept, the
/// rest is matched by maximum-weight assignment over valid pairs. IDS counts
/// a ground truth whose matched hypothesis differs from its last match;
/// FRAG counts resumptions of tracking after an unmatched stretch.
inline MotReport compute_clear_mot(const TrajectorySet& hypotheses, const TrajectorySet& ground_truth,
                                   const MotEvalConfig& cfg = MotEvalConfig{}) {
  cfg.validate();
  const auto gt_frames = detail::by_frame(ground_truth);
  const auto hyp_frames = detail::by_frame(hypotheses);
  std::vector<int> frames;
  for (const auto& [f, v] : gt_frames) frames.push_back(f);
  for (const auto& [f, v] : hyp_frames) frames.push_back(f);
  std::sort(frames.begin(), frames.end());
  frames.erase(std::unique(frames.begin(), frames.end()), frames.end());

  MotReport rep;
  double sim_sum = 0.0;
  std::map<std::int64_t, std::int64_t> prev_match, last_match;
  struct Status {
    bool ever = false;
    bool last = false;
  };
  std::map<std::int64_t, Status> status;
  static const std::vector<detail::MotEntry> kEmpty;

  for (int f : frames) {
    const auto git = gt_frames.find(f);
    const auto hit = hyp_frames.find(f);
    const auto& gts = git == gt_frames.end() ? kEmpty : git->second;
    const auto& hyps = hit == hyp_frames.end() ? kEmpty : hit->second;
    std::vector<int> gt_to_hyp(gts.size(), -1);
    std::vector<char> hyp_used(hyps.size(), 0);
    std::vector<double> sim_of(gts.size(), 0.0);

    if (cfg.prefer_previous) {
      for (std::size_t g = 0; g < gts.size(); ++g) {
        const auto pm = prev_match.find(gts[g].id);
        if (pm == prev_match.end()) continue;
        for (std::size_t h = 0; h < hyps.size(); ++h) {
          if (hyp_used[h] || hyps[h].id != pm->second) continue;
          const double s = detail::mot_similarity(cfg, gts[g].box, hyps[h].box);
          if (detail::mot_valid(cfg, gts[g].box, hyps[h].box, s)) {
            gt_to_hyp[g] = static_cast<int>(h);
            hyp_used[h] = 1;
            sim_of[g] = s;
          }
          break;
        }
      }
    }

    std::vector<std::size_t> rg, rh;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_to_hyp[g] < 0) rg.push_back(g);
    }
    for (std::size_t h = 0; h < hyps.size(); ++h) {
      if (!hyp_used[h]) rh.push_back(h);
    }
    if (!rg.empty() && !rh.empty()) {
      Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(rg.size(), rh.size());
      Eigen::MatrixXd sims(rg.size(), rh.size());
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> valid(rg.size(), rh.size());
      for (std::size_t a = 0; a < rg.size(); ++a) {
        for (std::size_t b = 0; b < rh.size(); ++b) {
          const auto& gb = gts[rg[a]].box;
          const auto& hb = hyps[rh[b]].box;
          const double s = detail::mot_similarity(cfg, gb, hb);
          sims(a, b) = s;
          valid(a, b) = detail::mot_valid(cfg, gb, hb, s);
          if (valid(a, b)) cost(a, b) = -detail::mot_weight(cfg, s);
        }
      }
      const auto assign = solve_assignment(cost);
      for (std::size_t a = 0; a < rg.size(); ++a) {
        const int b = assign[a];
        if (b < 0 || !valid(a, b)) continue;
        gt_to_hyp[rg[a]] = static_cast<int>(rh[b]);
        hyp_used[rh[b]] = 1;
        sim_of[rg[a]] = sims(a, b);
      }
    }

    prev_match.clear();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const std::int64_t gid = gts[g].id;
      auto& st = status[gid];
      const bool matched = gt_to_hyp[g] >= 0;
      if (matched) {
        const std::int64_t hid = hyps[gt_to_hyp[g]].id;
        if (auto lm = last_match.find(gid); lm != last_match.end() && lm->second != hid) ++rep.ids;
        last_match[gid] = hid;
        prev_match[gid] = hid;
        sim_sum += sim_of[g];
        ++rep.matches;
        if (st.ever && !st.last) ++rep.frag;
      } else {
        ++rep.fn;
      }
      st.ever = st.ever || matched;
      st.last = matched;
    }
    for (std::size_t h = 0; h < hyps.size(); ++h) {
      if (!hyp_used[h]) ++rep.fp;
    }
    rep.gt += static_cast<std::int64_t>(gts.size());
  }
  if (rep.gt == 0) throw Error(ErrorKind::kNoGroundTruth, "ground truth has no boxes");
  rep.mota = 1.0 - static_cast<double>(rep.fn + rep.fp + rep.ids) / static_cast<double>(rep.gt);
  rep.motp = rep.matches ? sim_sum / static_cast<double>(rep.matches) : 0.0;
  return rep;
}

}  // namespace mvlk

#endif  // MVLK_EVAL_HPP
