/*
 * mvlk - multi-view LiDAR toolkit
 *
 * 3D multi-object tracking: constant-velocity Kalman filter per track,
 * Hungarian association on box overlap, birth/death lifecycle.
 */

#ifndef MVLK_TRACKING_HPP
#define MVLK_TRACKING_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "mvlk/error.hpp"
#include "mvlk/geometry.hpp"
#include "mvlk/hungarian.hpp"

namespace mvlk {

struct TrajectoryPoint {
  int frame = 0;
  Box3D box;
};

/// track id -> boxes ordered by strictly increasing frame.
using TrajectorySet = std::map<std::int64_t, std::vector<TrajectoryPoint>>;

enum class AssociationMetric { kIou3d, kIouBev, kCenterDistance };

struct TrackerConfig {
  AssociationMetric metric = AssociationMetric::kIou3d;
  /// Minimum overlap for IoU metrics, maximum distance (m) for
  /// kCenterDistance.
  double threshold = 0.01;
  int min_hits = 3;
  int max_age = 2;
  double process_noise_scale = 1.0;
  double measurement_noise_scale = 1.0;
  double initial_variance = 10.0;
  double initial_velocity_variance = 10000.0;

  void validate() const {
    if (min_hits < 1 || max_age < 0 || !(process_noise_scale > 0.0) ||
        !(measurement_noise_scale > 0.0) || !(initial_variance > 0.0) ||
        !(initial_velocity_variance > 0.0)) {
      throw Error(ErrorKind::kConfigInvalid, "tracker config out of range");
    }
    if (metric == AssociationMetric::kCenterDistance ? !(threshold > 0.0)
                                                     : !(threshold >= 0.0 && threshold <= 1.0)) {
      throw Error(ErrorKind::kConfigInvalid, "association threshold out of range");
    }
  }
};

using StateVector = Eigen::Matrix<double, 10, 1>;
using StateCovariance = Eigen::Matrix<double, 10, 10>;

/// State layout: x, y, z, yaw, l, w, h, vx, vy, vz.
struct TrackState {
  StateVector state = StateVector::Zero();
  StateCovariance covariance = StateCovariance::Identity();
  std::int64_t track_id = 0;
  int hits = 0;
  int age_since_update = 0;
  ObjectClass class_label = ObjectClass::kCar;
  double score = 1.0;

  Box3D box() const {
    Box3D b;
    b.center = state.head<3>();
    b.yaw = normalize_angle(state(3));
    b.size = state.segment<3>(4);
    b.class_label = class_label;
    b.score = score;
    b.track_id = track_id;
    return b;
  }

  bool covariance_valid() const {
    if (!covariance.allFinite()) return false;
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-9) return false;
    Eigen::LLT<StateCovariance> llt(covariance);
    return llt.info() == Eigen::Success;
  }
};

inline TrackState init_track(const Box3D& det, std::int64_t id, const TrackerConfig& cfg) {
  TrackState t;
  t.state.head<3>() = det.center;
  t.state(3) = det.yaw;
  t.state.segment<3>(4) = det.size;
  t.covariance = StateCovariance::Identity() * cfg.initial_variance;
  t.covariance.bottomRightCorner<3, 3>() = Eigen::Matrix3d::Identity() * cfg.initial_velocity_variance;
  t.track_id = id;
  t.hits = 1;
  t.class_label = det.class_label;
  t.score = det.score;
  return t;
}

inline StateCovariance process_noise(const TrackerConfig& cfg) {
  StateCovariance q = StateCovariance::Identity();
  q.bottomRightCorner<3, 3>() *= 0.01;
  return q * cfg.process_noise_scale;
}

/// Constant-velocity prediction.
inline TrackState kalman_predict(const TrackState& track, double dt,
                                 const TrackerConfig& cfg = TrackerConfig{}) {
  if (!(dt > 0.0)) throw Error(ErrorKind::kConfigInvalid, "dt must be positive");
  StateCovariance f = StateCovariance::Identity();
  f(0, 7) = f(1, 8) = f(2, 9) = dt;
  TrackState out = track;
  out.state = f * track.state;
  out.state(3) = normalize_angle(out.state(3));
  out.covariance = f * track.covariance * f.transpose() + process_noise(cfg);
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  out.age_since_update += 1;
  return out;
}

inline bool should_die(const TrackState& track, const TrackerConfig& cfg) {
  return track.age_since_update > cfg.max_age;
}

/// Measurement update with z = (x, y, z, yaw, l, w, h). The yaw innovation
/// is wrapped to (-pi/2, pi/2] because a box heading is ambiguous by a half
/// turn. Joseph-form covariance update.
inline TrackState kalman_update(const TrackState& track, const Box3D& det,
                                const TrackerConfig& cfg = TrackerConfig{}) {
  using Meas = Eigen::Matrix<double, 7, 1>;
  using H = Eigen::Matrix<double, 7, 10>;
  H h = H::Zero();
  h.leftCols<7>().setIdentity();
  const Eigen::Matrix<double, 7, 7> r = Eigen::Matrix<double, 7, 7>::Identity() * cfg.measurement_noise_scale;

  Meas z;
  z << det.center, det.yaw, det.size;
  Meas y = z - h * track.state;
  y(3) = normalize_half_angle(y(3));

  const Eigen::Matrix<double, 7, 7> s = h * track.covariance * h.transpose() + r;
  const Eigen::Matrix<double, 10, 7> k = track.covariance * h.transpose() * s.inverse();
  TrackState out = track;
  out.state = track.state + k * y;
  out.state(3) = normalize_angle(out.state(3));
  for (int i = 4; i < 7; ++i) out.state(i) = std::max(out.state(i), 1e-3);
  const StateCovariance ikh = StateCovariance::Identity() - k * h;
  out.covariance = ikh * track.covariance * ikh.transpose() + k * r * k.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  out.hits += 1;
  out.age_since_update = 0;
  out.score = det.score;
  return out;
}

struct Association {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (track, detection)
  std::vector<std::size_t> unmatched_tracks;
  std::vector<std::size_t> unmatched_detections;
};

/// Affinity used by the tracker; larger is better. Center distance is
/// negated so every metric is maximised.
inline double association_affinity(AssociationMetric m, const Box3D& a, const Box3D& b) {
  switch (m) {
    case AssociationMetric::kIou3d: return iou_3d(a, b);
    case AssociationMetric::kIouBev: return iou_bev(a, b);
    case AssociationMetric::kCenterDistance: return -(a.center - b.center).norm();
  }
  return 0.0;
}

inline bool affinity_passes(const TrackerConfig& cfg, double affinity) {
  return cfg.metric == AssociationMetric::kCenterDistance ? -affinity <= cfg.threshold
                                                          : affinity >= cfg.threshold;
}

/// Optimal one-to-one assignment maximising total affinity between tracks
/// (their current box) and detections. Cross-class pairs are never matched;
/// pairs below the threshold are dropped after assignment.
inline Association associate(std::span<const TrackState> tracks, std::span<const Box3D> detections,
                             const TrackerConfig& cfg) {
  constexpr double kForbidden = 1e9;
  Association out;
  const auto nt = tracks.size(), nd = detections.size();
  Eigen::MatrixXd cost(nt, nd);
  Eigen::MatrixXd affinity(nt, nd);
  std::vector<Box3D> boxes(nt);
  for (std::size_t i = 0; i < nt; ++i) boxes[i] = tracks[i].box();
  for (std::size_t i = 0; i < nt; ++i) {
    for (std::size_t j = 0; j < nd; ++j) {
      if (boxes[i].class_label != detections[j].class_label) {
        affinity(i, j) = -std::numeric_limits<double>::infinity();
        cost(i, j) = kForbidden;
      } else {
        affinity(i, j) = association_affinity(cfg.metric, boxes[i], detections[j]);
        cost(i, j) = -affinity(i, j);
      }
    }
  }
  const auto assignment = solve_assignment(cost);
  std::vector<char> det_used(nd, 0);
  for (std::size_t i = 0; i < nt; ++i) {
    const int j = assignment[i];
    if (j >= 0 && std::isfinite(affinity(i, j)) && affinity_passes(cfg, affinity(i, j))) {
      out.matches.emplace_back(i, static_cast<std::size_t>(j));
      det_used[j] = 1;
    } else {
      out.unmatched_tracks.push_back(i);
    }
  }
  for (std::size_t j = 0; j < nd; ++j) {
    if (!det_used[j]) out.unmatched_detections.push_back(j);
  }
  return out;
}

/// Stateful tracker over a sequence of frames. Single owner.
class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg, double frame_dt) : cfg_(cfg), dt_(frame_dt) {
    cfg_.validate();
    if (!(frame_dt > 0.0)) throw Error(ErrorKind::kConfigInvalid, "frame_dt must be positive");
  }

  /// Processes one frame of detections. Reportable boxes are appended to
  /// the output set, including the tentative frames of a track when it is
  /// confirmed.
  void step(std::span<const Box3D> detections) {
    for (auto& t : tracks_) t.state = kalman_predict(t.state, dt_, cfg_);
    std::vector<TrackState> states;
    states.reserve(tracks_.size());
    for (const auto& t : tracks_) states.push_back(t.state);
    const auto assoc = associate(states, detections, cfg_);
    for (auto [ti, di] : assoc.matches) {
      auto& t = tracks_[ti];
      t.state = kalman_update(t.state, detections[di], cfg_);
      record(t, t.state.box());
    }
    for (auto di : assoc.unmatched_detections) {
      Live t;
      t.state = init_track(detections[di], next_id_++, cfg_);
      created_.push_back(t.state.track_id);
      Box3D b = detections[di];
      b.track_id = t.state.track_id;
      record(t, b);
      tracks_.push_back(std::move(t));
    }
    std::erase_if(tracks_, [&](const Live& t) { return should_die(t.state, cfg_); });
    ++frame_;
  }

  const TrajectorySet& trajectories() const { return output_; }
  std::span<const std::int64_t> created_ids() const { return created_; }

 private:
  struct Live {
    TrackState state;
    std::vector<TrajectoryPoint> pending;
    bool confirmed = false;
  };

  void record(Live& t, Box3D box) {
    box.track_id = t.state.track_id;
    t.pending.push_back({frame_, box});
    if (!t.confirmed && t.state.hits >= cfg_.min_hits) t.confirmed = true;
    if (t.confirmed) {
      auto& out = output_[t.state.track_id];
      out.insert(out.end(), t.pending.begin(), t.pending.end());
      t.pending.clear();
    }
  }

  TrackerConfig cfg_;
  double dt_;
  int frame_ = 0;
  std::int64_t next_id_ = 0;
  std::vector<Live> tracks_;
  TrajectorySet output_;
  std::vector<std::int64_t> created_;
};

inline TrajectorySet track_sequence(std::span<const std::vector<Box3D>> detections_per_frame,
                                    const TrackerConfig& cfg, double frame_dt) {
  Tracker tracker(cfg, frame_dt);
  for (const auto& dets : detections_per_frame) tracker.step(dets);
  return tracker.trajectories();
}

}  // namespace mvlk

#endif  // MVLK_TRACKING_HPP
