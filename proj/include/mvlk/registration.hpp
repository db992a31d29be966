/*
 * mvlk - multi-view LiDAR toolkit
 *
 * Automatic extrinsic calibration: normals, FPFH descriptors, closed-form
 * rigid fitting, feature RANSAC, ICP, and the coarse-to-fine pipeline that
 * chains them. Also the calibration quality measures (corner projection
 * error and camera reprojection error).
 */

#ifndef MVLK_REGISTRATION_HPP
#define MVLK_REGISTRATION_HPP

#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <optional>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "mvlk/error.hpp"
#include "mvlk/geometry.hpp"
#include "mvlk/kdtree.hpp"
#include "mvlk/parallel.hpp"

namespace mvlk {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

inline constexpr int kFpfhBinsPerFeature = 11;
inline constexpr int kFpfhSize = 3 * kFpfhBinsPerFeature;

/// 33 bins: alpha, phi, theta blocks of 11. Each block sums to 100, or the
/// whole descriptor is zero for points without usable neighbours.
struct FpfhDescriptor {
  std::array<double, kFpfhSize> bins{};

  bool is_zero() const {
    for (double b : bins) {
      if (b != 0.0) return false;
    }
    return true;
  }
};

struct RegistrationResult {
  RigidTransform transform;
  double fitness = 0.0;      // fraction of source points matched within threshold
  double inlier_rmse = 0.0;  // metres, over matched points
  int iterations_used = 0;
  /// ICP only: truncated RMS residual sqrt(mean(min(d^2, max_dist^2))) at
  /// the start of every iteration plus one entry at the final pose.
  std::vector<double> objective_trace;
};

struct HierarchyLevel {
  double voxel_size = 0.0;
  double max_correspondence_distance = 0.0;
  int max_iterations = 0;
  /// Target voxel size; 0 uses `voxel_size`. A finer target grid avoids the
  /// centroid bias of two misaligned grids at the last level.
  double target_voxel_size = 0.0;

  double target_voxel() const { return target_voxel_size > 0.0 ? target_voxel_size : voxel_size; }
};

struct HierarchyConfig {
  std::vector<HierarchyLevel> levels = {{1.0, 2.0, 50}, {0.5, 1.0, 100}, {0.1, 0.3, 300, 0.05}};
  double fpfh_radius = 5.0;    // 5x coarsest voxel
  double normal_radius = 2.5;  // 2.5x coarsest voxel
  int ransac_iterations = 100000;
  double ransac_inlier_threshold = 1.5;
  double convergence_epsilon = 1e-7;
  double edge_length_ratio = 0.9;
  int ransac_candidates = 32;
  int selection_levels = 2;  // levels run on every candidate before choosing
  int min_normal_neighbors = 3;
  double min_fitness = 0.2;
  Point3 source_viewpoint = Point3::Zero();
  Point3 target_viewpoint = Point3::Zero();
  std::uint64_t seed = 0;

  void validate() const {
    if (levels.empty()) throw Error(ErrorKind::kConfigInvalid, "hierarchy has no levels");
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const auto& l = levels[i];
      if (!(l.voxel_size > 0.0) || !(l.max_correspondence_distance > 0.0) ||
          l.max_iterations < 1 || l.target_voxel_size < 0.0) {
        throw Error(ErrorKind::kConfigInvalid, "hierarchy level values must be positive");
      }
      if (i > 0 && !(l.voxel_size < levels[i - 1].voxel_size)) {
        throw Error(ErrorKind::kConfigInvalid, "voxel sizes must strictly decrease");
      }
    }
    if (!(fpfh_radius > 0.0) || !(normal_radius > 0.0) || !(ransac_inlier_threshold > 0.0) ||
        ransac_iterations < 1 || !(convergence_epsilon > 0.0) || ransac_candidates < 1 ||
        selection_levels < 1) {
      throw Error(ErrorKind::kConfigInvalid, "radii, thresholds and iteration counts must be positive");
    }
  }
};

struct CornerPair {
  Point3 annotated;  // node frame
  Point3 reference;  // world frame
};

struct PixelPair {
  Point3 point;  // world frame
  Vec2 pixel;
};

// ---------------------------------------------------------------------------
// Normals and descriptors
// ---------------------------------------------------------------------------

/// Per-point unit normals from the smallest-eigenvalue eigenvector of the
/// radius neighbourhood covariance, flipped toward `viewpoint`. Points with
/// fewer than `min_neighbors` neighbours (self excluded) get a zero normal.
inline std::vector<Eigen::Vector3d> estimate_normals(const PointCloud& cloud, double radius,
                                                     int min_neighbors = 3,
                                                     const Point3& viewpoint = Point3::Zero()) {
  if (!(radius > 0.0)) throw Error(ErrorKind::kConfigInvalid, "normal radius must be positive");
  const KdTree tree(cloud.points);
  std::vector<Eigen::Vector3d> normals(cloud.size(), Eigen::Vector3d::Zero());
  parallel_for(cloud.size(), [&](std::size_t i) {
    const Point3& p = cloud.points[i];
    const auto nb = tree.radius_search(p, radius);
    if (static_cast<int>(nb.size()) - 1 < min_neighbors || nb.size() < 3) return;
    Point3 mean = Point3::Zero();
    for (auto j : nb) mean += cloud.points[j];
    mean /= static_cast<double>(nb.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (auto j : nb) {
      const Eigen::Vector3d d = cloud.points[j] - mean;
      cov.noalias() += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    Eigen::Vector3d n = eig.eigenvectors().col(0);
    if (!n.allFinite() || n.norm() < 0.5) return;
    n.normalize();
    if (n.dot(viewpoint - p) < 0.0) n = -n;
    normals[i] = n;
  });
  return normals;
}

namespace detail {

/// Darboux-frame pair features (alpha, phi, theta) between two oriented
/// points. The point whose normal makes the smaller angle with the
/// connecting line becomes the source. Returns false for coincident points
/// or a normal parallel to the connecting line.
inline bool pair_features(const Point3& p1, const Eigen::Vector3d& n1, const Point3& p2,
                          const Eigen::Vector3d& n2, std::array<double, 3>& f) {
  Eigen::Vector3d d = p2 - p1;
  const double dist = d.norm();
  if (dist < 1e-12) return false;
  d /= dist;
  Eigen::Vector3d ns = n1, nt = n2;
  double phi = n1.dot(d);
  const double angle2 = n2.dot(d);
  if (std::acos(std::clamp(std::abs(phi), 0.0, 1.0)) >
      std::acos(std::clamp(std::abs(angle2), 0.0, 1.0))) {
    ns = n2;
    nt = n1;
    d = -d;
    phi = -angle2;
  }
  Eigen::Vector3d v = d.cross(ns);
  const double vn = v.norm();
  if (vn < 1e-12) return false;
  v /= vn;
  const Eigen::Vector3d w = ns.cross(v);
  f[0] = v.dot(nt);                          // alpha
  f[1] = phi;                                // phi
  f[2] = std::atan2(w.dot(nt), ns.dot(nt));  // theta
  return true;
}

inline int feature_bin(double value, double lo, double hi) {
  const int b = static_cast<int>(std::floor(kFpfhBinsPerFeature * (value - lo) / (hi - lo)));
  return std::clamp(b, 0, kFpfhBinsPerFeature - 1);
}

}  // namespace detail

/// FPFH(p) = SPFH(p) + (1/k) sum_i SPFH(p_i) / |p - p_i|, each 11-bin block
/// renormalised to sum 100.
inline std::vector<FpfhDescriptor> compute_fpfh(const PointCloud& cloud,
                                                std::span<const Eigen::Vector3d> normals,
                                                double radius) {
  if (normals.size() != cloud.size()) {
    throw Error(ErrorKind::kConfigInvalid, "normals do not match cloud");
  }
  if (!(radius > 0.0)) throw Error(ErrorKind::kConfigInvalid, "fpfh radius must be positive");
  const std::size_t n = cloud.size();
  const KdTree tree(cloud.points);
  auto has_normal = [&](std::size_t i) { return normals[i].squaredNorm() > 0.25; };

  std::vector<std::vector<std::size_t>> neighbors(n);
  std::vector<FpfhDescriptor> spfh(n);
  parallel_for(n, [&](std::size_t i) {
    if (!has_normal(i)) return;
    auto nb = tree.radius_search(cloud.points[i], radius);
    std::erase_if(nb, [&](std::size_t j) {
      return j == i || !has_normal(j) || (cloud.points[j] - cloud.points[i]).norm() < 1e-12;
    });
    std::vector<std::array<double, 3>> feats;
    feats.reserve(nb.size());
    for (auto j : nb) {
      std::array<double, 3> f;
      if (detail::pair_features(cloud.points[i], normals[i], cloud.points[j], normals[j], f)) {
        feats.push_back(f);
      }
    }
    if (!feats.empty()) {
      const double inc = 100.0 / static_cast<double>(feats.size());
      auto& bins = spfh[i].bins;
      for (const auto& f : feats) {
        bins[detail::feature_bin(f[0], -1.0, 1.0)] += inc;
        bins[kFpfhBinsPerFeature + detail::feature_bin(f[1], -1.0, 1.0)] += inc;
        bins[2 * kFpfhBinsPerFeature + detail::feature_bin(f[2], -kPi, kPi)] += inc;
      }
    }
    neighbors[i] = std::move(nb);
  });

  std::vector<FpfhDescriptor> out(n);
  parallel_for(n, [&](std::size_t i) {
    if (spfh[i].is_zero()) return;
    const auto& nb = neighbors[i];
    auto acc = spfh[i].bins;
    if (!nb.empty()) {
      const double inv_k = 1.0 / static_cast<double>(nb.size());
      for (auto j : nb) {
        const double w = inv_k / (cloud.points[i] - cloud.points[j]).norm();
        for (int b = 0; b < kFpfhSize; ++b) acc[b] += w * spfh[j].bins[b];
      }
    }
    for (int blk = 0; blk < 3; ++blk) {
      double sum = 0.0;
      for (int b = 0; b < kFpfhBinsPerFeature; ++b) sum += acc[blk * kFpfhBinsPerFeature + b];
      if (sum > 0.0) {
        for (int b = 0; b < kFpfhBinsPerFeature; ++b) acc[blk * kFpfhBinsPerFeature + b] *= 100.0 / sum;
      }
    }
    out[i].bins = acc;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Closed-form rigid fit
// ---------------------------------------------------------------------------

/// Least-squares rigid transform mapping `source` onto `target` (SVD of the
/// cross-covariance with reflection correction).
inline RigidTransform solve_rigid_arun(std::span<const Point3> source,
                                       std::span<const Point3> target) {
  if (source.size() != target.size() || source.size() < 3) {
    throw Error(ErrorKind::kDegenerateConfiguration, "need at least 3 paired points");
  }
  const double n = static_cast<double>(source.size());
  Point3 sbar = Point3::Zero(), tbar = Point3::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    sbar += source[i];
    tbar += target[i];
  }
  sbar /= n;
  tbar /= n;
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    h.noalias() += (source[i] - sbar) * (target[i] - tbar).transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0)) {
    throw Error(ErrorKind::kDegenerateConfiguration, "points are collinear or coincident");
  }
  const Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  RigidTransform t;
  t.rotation = v * d * u.transpose();
  t.translation = tbar - t.rotation * sbar;
  return t;
}

namespace detail {

struct MatchStats {
  std::size_t matched = 0;
  double sum_sq = 0.0;
};

inline MatchStats match_stats(const PointCloud& source, const KdTree& target,
                              const RigidTransform& t, double max_dist) {
  MatchStats s;
  const double max2 = max_dist * max_dist;
  for (const auto& p : source.points) {
    const auto nn = target.nearest(t.apply(p));
    if (nn.squared_distance <= max2) {
      ++s.matched;
      s.sum_sq += nn.squared_distance;
    }
  }
  return s;
}

inline void fill_quality(RegistrationResult& r, const PointCloud& source, const KdTree& target,
                         double max_dist) {
  const auto s = match_stats(source, target, r.transform, max_dist);
  r.fitness = source.empty() ? 0.0 : static_cast<double>(s.matched) / static_cast<double>(source.size());
  r.inlier_rmse = s.matched ? std::sqrt(s.sum_sq / static_cast<double>(s.matched)) : 0.0;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Feature RANSAC
// ---------------------------------------------------------------------------

/// Mutual nearest neighbours in descriptor space; zero descriptors never
/// participate. Pairs are (source index, target index), ascending by source.
inline std::vector<std::pair<std::size_t, std::size_t>> mutual_feature_matches(
    std::span<const FpfhDescriptor> source, std::span<const FpfhDescriptor> target) {
  auto nearest_in = [](const FpfhDescriptor& q, std::span<const FpfhDescriptor> set,
                       std::span<const char> usable) {
    std::size_t best = SIZE_MAX;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < set.size(); ++j) {
      if (!usable[j]) continue;
      double d = 0.0;
      for (int b = 0; b < kFpfhSize && d < best_d; ++b) {
        const double diff = q.bins[b] - set[j].bins[b];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    return best;
  };
  std::vector<char> src_ok(source.size()), tgt_ok(target.size());
  for (std::size_t i = 0; i < source.size(); ++i) src_ok[i] = !source[i].is_zero();
  for (std::size_t j = 0; j < target.size(); ++j) tgt_ok[j] = !target[j].is_zero();

  std::vector<std::size_t> fwd(source.size(), SIZE_MAX);
  parallel_for(source.size(), [&](std::size_t i) {
    if (src_ok[i]) fwd[i] = nearest_in(source[i], target, tgt_ok);
  }, 32);
  std::vector<std::size_t> bwd(target.size(), SIZE_MAX);
  parallel_for(target.size(), [&](std::size_t j) {
    if (tgt_ok[j]) bwd[j] = nearest_in(target[j], source, src_ok);
  }, 32);

  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (fwd[i] != SIZE_MAX && bwd[fwd[i]] == i) out.emplace_back(i, fwd[i]);
  }
  return out;
}

/// Feature-correspondence RANSAC. Hypotheses come from 3 mutual matches
/// that pass the edge-length consistency test and are ranked by
/// correspondence inliers (earlier trial first on ties). Up to
/// `cfg.ransac_candidates` mutually distinct hypotheses are returned, each
/// refit on its inliers; the best comes first.
inline std::vector<RegistrationResult> ransac_candidates(const PointCloud& source, const PointCloud& target,
                                                         std::span<const FpfhDescriptor> source_fpfh,
                                                         std::span<const FpfhDescriptor> target_fpfh,
                                                         const HierarchyConfig& cfg) {
  const auto matches = mutual_feature_matches(source_fpfh, target_fpfh);
  if (matches.size() < 3) {
    throw Error(ErrorKind::kNoConsensus, "fewer than 3 mutual feature matches");
  }
  std::vector<Point3> ms, mt;
  ms.reserve(matches.size());
  mt.reserve(matches.size());
  for (auto [i, j] : matches) {
    ms.push_back(source.points[i]);
    mt.push_back(target.points[j]);
  }
  const double thr2 = cfg.ransac_inlier_threshold * cfg.ransac_inlier_threshold;
  auto count_inliers = [&](const RigidTransform& t, std::vector<std::size_t>* inliers) {
    std::size_t c = 0;
    for (std::size_t k = 0; k < ms.size(); ++k) {
      if ((t.apply(ms[k]) - mt[k]).squaredNorm() <= thr2) {
        ++c;
        if (inliers) inliers->push_back(k);
      }
    }
    return c;
  };
  auto consistent = [&](std::size_t a, std::size_t b) {
    const double ds = (ms[a] - ms[b]).norm();
    const double dt = (mt[a] - mt[b]).norm();
    const double hi = std::max(ds, dt);
    return hi > 0.0 && std::min(ds, dt) / hi > cfg.edge_length_ratio;
  };
  auto similar = [&](const RigidTransform& a, const RigidTransform& b) {
    return rotation_error(a, b) < 10.0 * kPi / 180.0 && translation_error(a, b) < cfg.ransac_inlier_threshold;
  };

  struct Hypothesis {
    std::size_t count;
    RigidTransform transform;
  };
  std::vector<Hypothesis> best;  // descending count, pairwise distinct
  const auto keep = static_cast<std::size_t>(cfg.ransac_candidates);
  auto offer = [&](std::size_t count, const RigidTransform& t) {
    for (std::size_t i = 0; i < best.size(); ++i) {
      if (!similar(best[i].transform, t)) continue;
      if (count <= best[i].count) return;
      best.erase(best.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
    auto pos = std::find_if(best.begin(), best.end(), [&](const Hypothesis& h) { return h.count < count; });
    best.insert(pos, {count, t});
    if (best.size() > keep) best.pop_back();
  };

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, ms.size() - 1);
  for (int trial = 0; trial < cfg.ransac_iterations; ++trial) {
    const std::size_t a = pick(rng), b = pick(rng), c = pick(rng);
    if (a == b || b == c || a == c) continue;
    if (!consistent(a, b) || !consistent(b, c) || !consistent(a, c)) continue;
    const double area = (ms[b] - ms[a]).cross(ms[c] - ms[a]).norm();
    if (area < 1e-6) continue;
    const std::array<Point3, 3> s3 = {ms[a], ms[b], ms[c]};
    const std::array<Point3, 3> t3 = {mt[a], mt[b], mt[c]};
    RigidTransform hyp;
    try {
      hyp = solve_rigid_arun(s3, t3);
    } catch (const Error&) {
      continue;
    }
    const std::size_t count = count_inliers(hyp, nullptr);
    if (count >= 3) offer(count, hyp);
  }
  if (best.empty()) {
    throw Error(ErrorKind::kNoConsensus, "best hypothesis has fewer than 3 inliers");
  }

  const KdTree tree(target.points);
  std::vector<RegistrationResult> out;
  for (const auto& h : best) {
    RegistrationResult result;
    result.transform = h.transform;
    result.iterations_used = cfg.ransac_iterations;
    std::vector<std::size_t> inliers;
    count_inliers(h.transform, &inliers);
    std::vector<Point3> is, it;
    for (auto k : inliers) {
      is.push_back(ms[k]);
      it.push_back(mt[k]);
    }
    try {
      const RigidTransform refit = solve_rigid_arun(is, it);
      if (count_inliers(refit, nullptr) >= inliers.size()) result.transform = refit;
    } catch (const Error&) {
    }
    detail::fill_quality(result, source, tree, cfg.ransac_inlier_threshold);
    out.push_back(std::move(result));
  }
  return out;
}

/// Best RANSAC hypothesis only.
inline RegistrationResult coarse_align_ransac(const PointCloud& source, const PointCloud& target,
                                              std::span<const FpfhDescriptor> source_fpfh,
                                              std::span<const FpfhDescriptor> target_fpfh,
                                              const HierarchyConfig& cfg) {
  HierarchyConfig one = cfg;
  one.ransac_candidates = 1;
  return ransac_candidates(source, target, source_fpfh, target_fpfh, one).front();
}

// ---------------------------------------------------------------------------
// ICP
// ---------------------------------------------------------------------------

/// Point-to-point ICP. Each iteration pairs every source point with its
/// exact nearest target point within `max_dist` and re-solves the rigid fit.
/// Stops when the relative change of the truncated RMS residual drops below
/// `eps` or after `max_iter` iterations. The truncated residual is
/// non-increasing by construction.
inline RegistrationResult icp_refine(const PointCloud& source, const PointCloud& target,
                                     const RigidTransform& init, double max_dist, int max_iter,
                                     double eps, const KdTree* target_tree = nullptr) {
  if (!(max_dist > 0.0)) throw Error(ErrorKind::kConfigInvalid, "max_dist must be positive");
  std::optional<KdTree> own;
  if (!target_tree) {
    own.emplace(target.points);
    target_tree = &*own;
  }
  const KdTree& tree = *target_tree;
  const double max2 = max_dist * max_dist;
  const std::size_t n = source.size();

  RegistrationResult result;
  result.transform = init;
  std::vector<Point3> moved(n), src_pairs, tgt_pairs;
  std::vector<KdTree::Neighbor> nn(n);
  double prev = -1.0;

  auto correspond = [&](const RigidTransform& t) {
    parallel_for(n, [&](std::size_t i) {
      moved[i] = t.apply(source.points[i]);
      nn[i] = tree.nearest(moved[i]);
    });
    double truncated = 0.0;
    src_pairs.clear();
    tgt_pairs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (nn[i].squared_distance <= max2) {
        truncated += nn[i].squared_distance;
        src_pairs.push_back(moved[i]);
        tgt_pairs.push_back(tree.point(nn[i].index));
      } else {
        truncated += max2;
      }
    }
    return n ? std::sqrt(truncated / static_cast<double>(n)) : 0.0;
  };

  bool stale = true;  // pose changed since the last residual evaluation
  for (int it = 0; it < max_iter; ++it) {
    const double objective = correspond(result.transform);
    stale = false;
    if (it == 0 && src_pairs.empty()) {
      throw Error(ErrorKind::kNoCorrespondences, "no source point within max_dist of target");
    }
    result.objective_trace.push_back(objective);
    if (prev >= 0.0 && std::abs(prev - objective) <= eps * objective + 1e-12) break;
    if (src_pairs.size() < 3) break;
    RigidTransform delta;
    try {
      delta = solve_rigid_arun(src_pairs, tgt_pairs);
    } catch (const Error&) {
      break;
    }
    result.transform = compose(delta, result.transform);
    ++result.iterations_used;
    stale = true;
    prev = objective;
  }
  if (stale) result.objective_trace.push_back(correspond(result.transform));
  detail::fill_quality(result, source, tree, max_dist);
  return result;
}

// ---------------------------------------------------------------------------
// Coarse-to-fine pipeline
// ---------------------------------------------------------------------------

/// RANSAC on FPFH matches at the coarsest voxel level, then ICP at every
/// level from coarse to fine, each warm-started from the previous pose.
/// Every RANSAC candidate is carried through the first `selection_levels`
/// levels and the one with the lowest truncated residual continues; this
/// resolves the near-symmetric poses a street layout tends to produce.
inline RegistrationResult hierarchical_register(const PointCloud& source, const PointCloud& target,
                                                const HierarchyConfig& cfg) {
  cfg.validate();
  struct Level {
    PointCloud src, tgt;
    std::optional<KdTree> tree;
  };
  std::vector<Level> levels(cfg.levels.size());
  auto level = [&](std::size_t l) -> Level& {
    Level& lv = levels[l];
    if (!lv.tree) {
      lv.src = voxel_downsample(source, cfg.levels[l].voxel_size);
      lv.tgt = voxel_downsample(target, cfg.levels[l].target_voxel());
      lv.tree.emplace(lv.tgt.points);
    }
    return lv;
  };
  auto refine = [&](std::size_t l, const RigidTransform& init) {
    const Level& lv = level(l);
    const auto& spec = cfg.levels[l];
    return icp_refine(lv.src, lv.tgt, init, spec.max_correspondence_distance, spec.max_iterations,
                      cfg.convergence_epsilon, &*lv.tree);
  };

  const Level& coarse = level(0);
  const auto src_n = estimate_normals(coarse.src, cfg.normal_radius, cfg.min_normal_neighbors, cfg.source_viewpoint);
  const auto tgt_n = estimate_normals(coarse.tgt, cfg.normal_radius, cfg.min_normal_neighbors, cfg.target_viewpoint);
  const auto src_f = compute_fpfh(coarse.src, src_n, cfg.fpfh_radius);
  const auto tgt_f = compute_fpfh(coarse.tgt, tgt_n, cfg.fpfh_radius);
  const auto candidates = ransac_candidates(coarse.src, coarse.tgt, src_f, tgt_f, cfg);

  const std::size_t select = std::min<std::size_t>(static_cast<std::size_t>(cfg.selection_levels), levels.size());
  RegistrationResult result;
  int total_iters = 0;
  double best_objective = std::numeric_limits<double>::infinity();
  std::vector<RigidTransform> seen;  // coarse-level poses already tried
  for (const auto& cand : candidates) {
    RegistrationResult r = refine(0, cand.transform);
    total_iters += r.iterations_used;
    const bool duplicate = std::any_of(seen.begin(), seen.end(), [&](const RigidTransform& t) {
      return rotation_error(t, r.transform) < 2.0 * kPi / 180.0 &&
             translation_error(t, r.transform) < cfg.levels.front().voxel_size;
    });
    if (duplicate) continue;
    seen.push_back(r.transform);
    for (std::size_t l = 1; l < select; ++l) {
      r = refine(l, r.transform);
      total_iters += r.iterations_used;
    }
    const double objective = r.objective_trace.empty() ? 0.0 : r.objective_trace.back();
    if (objective < best_objective) {
      best_objective = objective;
      result = r;
    }
  }
  for (std::size_t l = select; l < levels.size(); ++l) {
    result = refine(l, result.transform);
    total_iters += result.iterations_used;
  }
  result.iterations_used = total_iters;
  return result;
}

/// True when a registration result is too weak to trust as a calibration.
inline bool calibration_failed(const RegistrationResult& r, const HierarchyConfig& cfg) {
  return r.fitness < cfg.min_fitness;
}

// ---------------------------------------------------------------------------
// Accumulation and calibration quality
// ---------------------------------------------------------------------------

/// Concatenates frames whose timestamps lie within `duration_s` of the first
/// frame (half-open window).
inline PointCloud accumulate_frames(std::span<const PointCloud> frames, double duration_s) {
  PointCloud out;
  if (frames.empty()) return out;
  out = frames.front().empty_like();
  const std::int64_t t0 = frames.front().timestamp_ns;
  const auto window = static_cast<std::int64_t>(std::llround(duration_s * 1e9));
  const bool intensity = std::all_of(frames.begin(), frames.end(),
                                     [](const PointCloud& f) { return f.has_intensity() || f.empty(); });
  for (const auto& f : frames) {
    if (f.timestamp_ns - t0 >= window) break;
    out.points.insert(out.points.end(), f.points.begin(), f.points.end());
    if (intensity) {
      if (f.has_intensity()) {
        out.intensity.insert(out.intensity.end(), f.intensity.begin(), f.intensity.end());
      }
    }
  }
  if (out.intensity.size() != out.points.size()) out.intensity.clear();
  return out;
}

/// Mean distance between transformed annotated corners and their reference
/// positions, metres.
inline double evaluate_point_projection_error(std::span<const CornerPair> pairs,
                                              const RigidTransform& t) {
  if (pairs.empty()) throw Error(ErrorKind::kEmptyInput, "no corner pairs");
  double sum = 0.0;
  for (const auto& p : pairs) sum += (t.apply(p.annotated) - p.reference).norm();
  return sum / static_cast<double>(pairs.size());
}

/// Mean pixel distance between projected points and annotated pixels.
inline double evaluate_reprojection_error(const PinholeCamera& cam, std::span<const PixelPair> pairs) {
  if (pairs.empty()) throw Error(ErrorKind::kEmptyInput, "no pixel pairs");
  double sum = 0.0;
  for (const auto& p : pairs) {
    const auto uv = project_pinhole(cam, p.point);
    if (!uv) throw Error(ErrorKind::kBehindCamera, "annotated point is behind the camera");
    sum += (*uv - p.pixel).norm();
  }
  return sum / static_cast<double>(pairs.size());
}

}  // namespace mvlk

#endif  // MVLK_REGISTRATION_HPP
