// Independent reference implementations used to check the library.

#ifndef MVLK_TESTS_ORACLES_HPP
#define MVLK_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "mvlk/eval.hpp"
#include "mvlk/geometry.hpp"
#include "mvlk/tracking.hpp"

namespace oracle {

using mvlk::Box3D;

/// Shoelace area, absolute value.
inline double shoelace(const std::vector<Eigen::Vector2d>& poly) {
  double s = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    s += a.x() * b.y() - b.x() * a.y();
  }
  return std::abs(s) / 2.0;
}

inline bool inside(const Box3D& b, const Eigen::Vector3d& p) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const Eigen::Vector3d d = p - b.center;
  const double lx = c * d.x() + s * d.y();
  const double ly = -s * d.x() + c * d.y();
  return std::abs(lx) <= b.size.x() / 2 && std::abs(ly) <= b.size.y() / 2 && std::abs(d.z()) <= b.size.z() / 2;
}

/// Axis-aligned bounds of a yawed box.
inline std::pair<Eigen::Vector3d, Eigen::Vector3d> bounds(const Box3D& b) {
  const double c = std::abs(std::cos(b.yaw)), s = std::abs(std::sin(b.yaw));
  const Eigen::Vector3d half(c * b.size.x() / 2 + s * b.size.y() / 2, s * b.size.x() / 2 + c * b.size.y() / 2,
                             b.size.z() / 2);
  return {b.center - half, b.center + half};
}

inline double radical_inverse(std::uint64_t i, unsigned base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

/// Monte-Carlo 3D IoU: randomly shifted Halton points over the overlap of
/// the two bounding boxes estimate the intersection volume.
inline double iou_3d_mc(const Box3D& a, const Box3D& b, int samples, std::mt19937_64& rng) {
  const auto [alo, ahi] = bounds(a);
  const auto [blo, bhi] = bounds(b);
  const Eigen::Vector3d lo = alo.cwiseMax(blo), hi = ahi.cwiseMin(bhi);
  const double va = a.size.prod(), vb = b.size.prod();
  if ((hi.array() <= lo.array()).any()) return 0.0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Eigen::Vector3d shift(u(rng), u(rng), u(rng));
  const Eigen::Vector3d ext = hi - lo;
  int hits = 0;
  for (int i = 1; i <= samples; ++i) {
    Eigen::Vector3d q(radical_inverse(static_cast<std::uint64_t>(i), 2), radical_inverse(static_cast<std::uint64_t>(i), 3),
                      radical_inverse(static_cast<std::uint64_t>(i), 5));
    for (int k = 0; k < 3; ++k) q[k] = std::fmod(q[k] + shift[k], 1.0);
    const Eigen::Vector3d p = lo + q.cwiseProduct(ext);
    if (inside(a, p) && inside(b, p)) ++hits;
  }
  const double inter = ext.prod() * hits / samples;
  return inter / (va + vb - inter);
}

/// Exhaustive minimum-cost assignment of min(rows, cols) pairs.
inline double brute_assignment_cost(const Eigen::MatrixXd& cost) {
  const int r = static_cast<int>(cost.rows()), c = static_cast<int>(cost.cols());
  const bool t = r > c;
  const Eigen::MatrixXd m = t ? Eigen::MatrixXd(cost.transpose()) : cost;
  std::vector<int> cols(m.cols());
  for (int i = 0; i < m.cols(); ++i) cols[i] = i;
  double best = std::numeric_limits<double>::infinity();
  // Every permutation of the columns; the first m.rows() give the pairing.
  std::sort(cols.begin(), cols.end());
  do {
    double s = 0.0;
    for (int i = 0; i < m.rows(); ++i) s += m(i, cols[i]);
    best = std::min(best, s);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

// ---------------------------------------------------------------------------
// Average precision by cutoff enumeration
// ---------------------------------------------------------------------------

/// For every distinct score, keeps detections at or above it, matches them
/// from scratch, and records (recall, precision); AP averages the best
/// precision at recall >= each sample.
inline double ap_by_cutoffs(const std::vector<mvlk::FrameBox>& dets, const std::vector<mvlk::FrameBox>& gt,
                            mvlk::ObjectClass cls, const mvlk::DetectionEvalConfig& cfg) {
  std::vector<std::size_t> gt_idx;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i].box.class_label == cls) gt_idx.push_back(i);
  }
  const int n_gt = static_cast<int>(gt_idx.size());
  std::vector<std::size_t> cand;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].box.class_label == cls) cand.push_back(i);
  }
  std::set<double, std::greater<>> cutoffs;
  for (auto i : cand) cutoffs.insert(dets[i].box.score);
  std::vector<std::pair<double, double>> points;  // recall, precision
  for (double cut : cutoffs) {
    std::vector<std::size_t> kept;
    for (auto i : cand) {
      if (dets[i].box.score >= cut) kept.push_back(i);
    }
    std::stable_sort(kept.begin(), kept.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].box.score > dets[b].box.score; });
    std::vector<bool> used(gt.size(), false);
    int tp = 0;
    for (auto d : kept) {
      double best = -1.0;
      std::size_t arg = SIZE_MAX;
      for (auto g : gt_idx) {
        if (used[g] || gt[g].frame != dets[d].frame) continue;
        const double o = mvlk::overlap(cfg.metric, dets[d].box, gt[g].box);
        if (o > best) {
          best = o;
          arg = g;
        }
      }
      if (arg != SIZE_MAX && best >= cfg.threshold(cls)) {
        used[arg] = true;
        ++tp;
      }
    }
    points.emplace_back(static_cast<double>(tp) / n_gt, static_cast<double>(tp) / static_cast<double>(kept.size()));
  }
  std::vector<double> samples;
  if (cfg.recall_points == 11) {
    for (int k = 0; k <= 10; ++k) samples.push_back(k / 10.0);
  } else {
    for (int k = 1; k <= 40; ++k) samples.push_back(k / 40.0);
  }
  double sum = 0.0;
  for (double r : samples) {
    double best = 0.0;
    for (const auto& [rec, prec] : points) {
      if (rec >= r) best = std::max(best, prec);
    }
    sum += best;
  }
  return sum / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------
// CLEAR MOT with exhaustive per-frame matching
// ---------------------------------------------------------------------------

struct MotCounts {
  long long fn = 0, fp = 0, ids = 0, frag = 0, gt = 0, matches = 0;
  double sim_sum = 0.0;
};

/// Same matching rules as CLEAR MOT (keep still-valid previous pairs, then
/// a maximum-total-IoU matching of the rest), with the matching found by
/// exhaustive search.
inline MotCounts clear_mot_brute(const mvlk::TrajectorySet& hyp, const mvlk::TrajectorySet& gt,
                                 const mvlk::MotEvalConfig& cfg) {
  struct E {
    std::int64_t id;
    Box3D box;
  };
  std::map<int, std::vector<E>> G, H;
  for (const auto& [id, tr] : gt) {
    for (const auto& p : tr) G[p.frame].push_back({id, p.box});
  }
  for (const auto& [id, tr] : hyp) {
    for (const auto& p : tr) H[p.frame].push_back({id, p.box});
  }
  std::set<int> frames;
  for (auto& [f, v] : G) frames.insert(f);
  for (auto& [f, v] : H) frames.insert(f);
  auto sim = [&](const Box3D& a, const Box3D& b) { return mvlk::iou_3d(a, b); };
  auto valid = [&](const Box3D& a, const Box3D& b) {
    return a.class_label == b.class_label && sim(a, b) >= cfg.threshold;
  };

  MotCounts out;
  std::map<std::int64_t, std::int64_t> prev, last;
  std::map<std::int64_t, std::pair<bool, bool>> st;  // ever, last-frame
  for (int f : frames) {
    const auto& g = G[f];
    const auto& h = H[f];
    std::vector<int> m(g.size(), -1);
    std::vector<bool> hu(h.size(), false);
    if (cfg.prefer_previous) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        auto p = prev.find(g[i].id);
        if (p == prev.end()) continue;
        for (std::size_t j = 0; j < h.size(); ++j) {
          if (h[j].id == p->second && !hu[j]) {
            if (valid(g[i].box, h[j].box)) {
              m[i] = static_cast<int>(j);
              hu[j] = true;
            }
            break;
          }
        }
      }
    }
    // Exhaustive search over matchings of the remaining valid pairs.
    std::vector<int> best = m, cur = m;
    double best_w = -1.0;
    std::vector<bool> used = hu;
    std::function<void(std::size_t, double)> rec = [&](std::size_t i, double w) {
      if (i == g.size()) {
        if (w > best_w) {
          best_w = w;
          best = cur;
        }
        return;
      }
      if (m[i] >= 0) {
        rec(i + 1, w);
        return;
      }
      rec(i + 1, w);
      for (std::size_t j = 0; j < h.size(); ++j) {
        if (used[j] || !valid(g[i].box, h[j].box)) continue;
        used[j] = true;
        cur[i] = static_cast<int>(j);
        rec(i + 1, w + sim(g[i].box, h[j].box));
        cur[i] = -1;
        used[j] = false;
      }
    };
    rec(0, 0.0);
    m = best;
    prev.clear();
    std::vector<bool> hm(h.size(), false);
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto& s = st[g[i].id];
      if (m[i] >= 0) {
        hm[static_cast<std::size_t>(m[i])] = true;
        const auto hid = h[static_cast<std::size_t>(m[i])].id;
        if (last.count(g[i].id) && last[g[i].id] != hid) ++out.ids;
        last[g[i].id] = hid;
        prev[g[i].id] = hid;
        ++out.matches;
        out.sim_sum += sim(g[i].box, h[static_cast<std::size_t>(m[i])].box);
        if (s.first && !s.second) ++out.frag;
        s = {true, true};
      } else {
        ++out.fn;
        s.second = false;
      }
    }
    for (std::size_t j = 0; j < h.size(); ++j) {
      if (!hm[j]) ++out.fp;
    }
    out.gt += static_cast<long long>(g.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

inline Box3D random_box(std::mt19937_64& rng, double spread = 3.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Box3D b;
  b.center = {spread * (2 * u(rng) - 1), spread * (2 * u(rng) - 1), spread * 0.3 * (2 * u(rng) - 1)};
  b.size = {0.5 + 4 * u(rng), 0.5 + 2 * u(rng), 0.5 + 2 * u(rng)};
  b.yaw = mvlk::kPi * (2 * u(rng) - 1);
  return b;
}

/// A box near `b`: jittered center, size and yaw.
inline Box3D perturb(const Box3D& b, std::mt19937_64& rng, double scale = 0.3) {
  std::normal_distribution<double> n(0.0, 1.0);
  Box3D o = b;
  o.center += scale * Eigen::Vector3d(n(rng), n(rng), 0.3 * n(rng));
  o.size = (o.size.array() * (1.0 + 0.2 * scale * Eigen::Array3d(n(rng), n(rng), n(rng)))).max(0.1).matrix();
  o.yaw += scale * n(rng);
  return o;
}

/// Car-sized box standing on the ground.
inline Box3D car_at(double x, double y, double score = 1.0) {
  Box3D b;
  b.center = {x, y, 0.75};
  b.size = {4.0, 1.8, 1.5};
  b.score = score;
  return b;
}

/// Ground truth and at most `max_detections` detections over a few frames:
/// noisy copies of some ground-truth boxes plus clutter, with scores rounded
/// so ties occur.
inline std::pair<std::vector<mvlk::FrameBox>, std::vector<mvlk::FrameBox>> random_ap_instance(
    std::mt19937_64& rng, std::size_t max_detections = 10) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<mvlk::FrameBox> gt, det;
  const int frames = 1 + static_cast<int>(u(rng) * 4);
  for (int f = 0; f < frames; ++f) {
    const int n = 1 + static_cast<int>(u(rng) * 5);
    for (int i = 0; i < n; ++i) {
      auto g = random_box(rng, 15.0);
      const bool car = u(rng) < 0.8 || (f == 0 && i == 0);
      g.class_label = car ? mvlk::ObjectClass::kCar : mvlk::ObjectClass::kPedestrian;
      gt.push_back({f, g});
      const int copies = u(rng) < 0.8 ? 1 + (u(rng) < 0.2) : 0;
      for (int c = 0; c < copies; ++c) {
        auto d = perturb(g, rng, 0.25);
        d.score = std::round(u(rng) * 10.0) / 10.0;
        det.push_back({f, d});
      }
    }
    const int clutter = static_cast<int>(u(rng) * 3);
    for (int i = 0; i < clutter; ++i) {
      auto d = random_box(rng, 15.0);
      d.score = std::round(u(rng) * 10.0) / 10.0;
      det.push_back({f, d});
    }
  }
  std::shuffle(det.begin(), det.end(), rng);
  if (det.size() > max_detections) det.resize(max_detections);
  return {det, gt};
}

inline mvlk::TrajectorySet random_trajectories(std::mt19937_64& rng, int objects, int frames) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  mvlk::TrajectorySet gt;
  for (int o = 0; o < objects; ++o) {
    const int start = static_cast<int>(u(rng) * frames / 2);
    const int len = 2 + static_cast<int>(u(rng) * (frames - start - 1));
    Box3D b = car_at(-8 + 16 * u(rng), -8 + 16 * u(rng));
    const Eigen::Vector3d v(u(rng) - 0.5, u(rng) - 0.5, 0.0);
    for (int k = start; k < std::min(frames, start + len); ++k) {
      gt[o].push_back({k, b});
      b.center += v;
    }
  }
  return gt;
}

/// Hypotheses from ground truth: box noise, dropped frames, identity
/// changes mid-track and false positives.
inline mvlk::TrajectorySet corrupt(const mvlk::TrajectorySet& gt, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  mvlk::TrajectorySet hyp;
  std::int64_t next = 100;
  for (const auto& [id, traj] : gt) {
    std::int64_t hid = next++;
    for (const auto& p : traj) {
      if (u(rng) < 0.15) continue;
      if (u(rng) < 0.1) hid = next++;
      hyp[hid].push_back({p.frame, perturb(p.box, rng, 0.35)});
    }
  }
  for (int i = 0; i < 3; ++i) {
    Box3D b = car_at(-8 + 16 * u(rng), -8 + 16 * u(rng));
    hyp[next++].push_back({static_cast<int>(u(rng) * 8), b});
  }
  return hyp;
}

}  // namespace oracle

#endif  // MVLK_TESTS_ORACLES_HPP
