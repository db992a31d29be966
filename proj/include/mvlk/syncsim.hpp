/*
 * mvlk - multi-view LiDAR toolkit
 *
 * Discrete-event simulation of the acquisition network: the master
 * broadcasts a trigger over a lossy wireless link, each slave arms on
 * receipt and starts capturing on its next GPS PPS edge, then stamps frames
 * with its PPS-disciplined clock. Time is integer nanoseconds throughout.
 */

#ifndef MVLK_SYNCSIM_HPP
#define MVLK_SYNCSIM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <random>
#include <vector>

#include "mvlk/error.hpp"

namespace mvlk {

inline constexpr std::int64_t kNsPerSecond = 1'000'000'000;

enum class SensorKind { kLidar, kCamera };

struct NodeClockModel {
  double initial_offset_s = 0.0;
  double drift_ppm = 0.0;
  /// Scale of the PPS edge error; draws are truncated to +/- 2 scales so
  /// two modules never disagree by more than 4 scales.
  double pps_jitter_s = 5e-7;
  /// Std-dev of the software-trigger capture latency.
  double frame_jitter_s = 1e-4;

  static NodeClockModel lidar() { return {}; }
  static NodeClockModel camera() {
    NodeClockModel m;
    m.frame_jitter_s = 1e-3;
    return m;
  }
  static NodeClockModel for_sensor(SensorKind k) { return k == SensorKind::kLidar ? lidar() : camera(); }
};

struct NetworkModel {
  double delay_min_s = 0.001;
  double delay_max_s = 0.2;
  double drop_probability = 0.0;
  double retransmit_timeout_s = 0.05;
  int max_retransmissions = 20;
};

struct SessionConfig {
  int node_count = 4;
  double frame_rate_hz = 10.0;
  double duration_s = 10.0;
  SensorKind sensor = SensorKind::kLidar;
  /// Per-node clocks; empty means the sensor default for every node.
  std::vector<NodeClockModel> clocks;
  NetworkModel network;
  /// Per-node link overrides; empty means `network` for every node.
  std::vector<NetworkModel> links;
  /// When set, the trigger leaves at this fraction of a second so that the
  /// largest link delay cannot cross a second boundary.
  bool align_trigger_phase = true;
  double trigger_phase = 0.4;
  std::int64_t epoch_s = 1000;
  std::uint64_t seed = 0;

  NodeClockModel clock(int node) const {
    return clocks.empty() ? NodeClockModel::for_sensor(sensor) : clocks.at(node);
  }
  NetworkModel link(int node) const { return links.empty() ? network : links.at(node); }

  void validate() const {
    auto bad = [](const char* what) { throw Error(ErrorKind::kConfigInvalid, what); };
    if (node_count < 1) bad("node_count must be >= 1");
    if (!(frame_rate_hz > 0.0)) bad("frame_rate_hz must be positive");
    if (!(duration_s > 0.0)) bad("duration_s must be positive");
    if (!clocks.empty() && static_cast<int>(clocks.size()) != node_count) bad("one clock model per node");
    if (!links.empty() && static_cast<int>(links.size()) != node_count) bad("one link model per node");
    for (int n = 0; n < node_count; ++n) {
      const auto c = clock(n);
      if (!(c.pps_jitter_s >= 0.0) || !(c.frame_jitter_s >= 0.0)) bad("jitter must be non-negative");
      const auto l = link(n);
      if (!(l.delay_min_s >= 0.0) || !(l.delay_max_s >= l.delay_min_s)) bad("delay range invalid");
      if (!(l.drop_probability >= 0.0 && l.drop_probability <= 1.0)) bad("drop probability outside [0, 1]");
      if (!(l.retransmit_timeout_s > 0.0) || l.max_retransmissions < 0) bad("retransmission policy invalid");
    }
    if (!(trigger_phase >= 0.0 && trigger_phase < 1.0)) bad("trigger_phase outside [0, 1)");
    if (epoch_s < 0) bad("epoch must be non-negative");
  }
};

struct FrameStamp {
  std::int64_t true_capture_ns = 0;
  std::int64_t reported_ns = 0;
};

struct NodeTrace {
  std::int64_t trigger_arrival_true_ns = -1;  // -1 when never delivered
  bool armed = false;
  std::int64_t start_pps_index = -1;  // GPS second of the first frame
  std::int64_t start_edge_true_ns = -1;
  int retransmissions = 0;
  std::vector<FrameStamp> frames;

  double trigger_arrival_true_s() const { return static_cast<double>(trigger_arrival_true_ns) * 1e-9; }
};

struct SessionTrace {
  std::int64_t trigger_sent_true_ns = 0;
  std::vector<NodeTrace> nodes;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

/// Normal draw rejected outside +/- `bound` scales.
inline double truncated_normal(std::mt19937_64& rng, double scale, double bound) {
  if (scale <= 0.0) return 0.0;
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const double v = n(rng);
    if (std::abs(v) < bound) return v * scale;
  }
}

/// True time of the PPS edge marking GPS second `second` at `node`.
inline std::int64_t pps_edge_ns(const SessionConfig& cfg, int node, std::int64_t second) {
  std::mt19937_64 rng(stream_seed(cfg.seed, 0x5050000ull + static_cast<std::uint64_t>(node),
                                  static_cast<std::uint64_t>(second)));
  const double jitter = truncated_normal(rng, cfg.clock(node).pps_jitter_s, 2.0);
  return second * kNsPerSecond + static_cast<std::int64_t>(std::llround(jitter * 1e9));
}

/// Reading of the node's disciplined clock at true time `t`: zeroed at every
/// PPS edge, free-running with its drift in between.
inline std::int64_t local_clock_ns(const SessionConfig& cfg, int node, std::int64_t t) {
  std::int64_t s = t / kNsPerSecond;
  std::int64_t edge = pps_edge_ns(cfg, node, s);
  if (edge > t) {
    --s;
    edge = pps_edge_ns(cfg, node, s);
  } else if (const std::int64_t next = pps_edge_ns(cfg, node, s + 1); next <= t) {
    ++s;
    edge = next;
  }
  const double rate = 1.0 + cfg.clock(node).drift_ppm * 1e-6;
  return s * kNsPerSecond + static_cast<std::int64_t>(std::llround(static_cast<double>(t - edge) * rate));
}

}  // namespace detail

/// Runs one acquisition session. Deterministic in `cfg.seed`.
inline SessionTrace simulate_session(const SessionConfig& cfg) {
  cfg.validate();
  enum Kind { kSend, kArrive, kPps, kFrame };
  struct Event {
    std::int64_t time;
    std::uint64_t seq;
    Kind kind;
    int node;
    std::int64_t arg;
    bool operator>(const Event& o) const { return time != o.time ? time > o.time : seq > o.seq; }
  };
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue;
  std::uint64_t seq = 0;
  auto schedule = [&](std::int64_t t, Kind k, int node, std::int64_t arg) {
    queue.push({t, seq++, k, node, arg});
  };

  SessionTrace trace;
  trace.nodes.resize(cfg.node_count);
  const auto period_ns = static_cast<std::int64_t>(std::llround(1e9 / cfg.frame_rate_hz));
  const auto frame_count = static_cast<std::int64_t>(std::floor(cfg.duration_s * cfg.frame_rate_hz + 1e-9));

  std::vector<std::mt19937_64> net_rng, frame_rng;
  for (int n = 0; n < cfg.node_count; ++n) {
    net_rng.emplace_back(detail::stream_seed(cfg.seed, 0xA0000ull + n, 1));
    frame_rng.emplace_back(detail::stream_seed(cfg.seed, 0xF0000ull + n, 2));
  }

  std::int64_t t0 = cfg.epoch_s * kNsPerSecond;
  if (cfg.align_trigger_phase) {
    t0 += static_cast<std::int64_t>(std::llround(cfg.trigger_phase * 1e9));
  } else {
    std::mt19937_64 rng(detail::stream_seed(cfg.seed, 0x7000ull, 3));
    t0 += static_cast<std::int64_t>(std::uniform_real_distribution<double>(0.0, 1.0)(rng) * 1e9);
  }
  trace.trigger_sent_true_ns = t0;
  for (int n = 0; n < cfg.node_count; ++n) schedule(t0, kSend, n, 0);

  while (!queue.empty()) {
    const Event ev = queue.top();
    queue.pop();
    NodeTrace& node = trace.nodes[ev.node];
    switch (ev.kind) {
      case kSend: {
        const NetworkModel link = cfg.link(ev.node);
        auto& rng = net_rng[ev.node];
        const bool dropped = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < link.drop_probability;
        if (!dropped) {
          const double delay = std::uniform_real_distribution<double>(link.delay_min_s, link.delay_max_s)(rng);
          schedule(ev.time + static_cast<std::int64_t>(std::llround(delay * 1e9)), kArrive, ev.node, ev.arg);
        } else if (ev.arg < link.max_retransmissions) {
          node.retransmissions = static_cast<int>(ev.arg + 1);
          schedule(ev.time + static_cast<std::int64_t>(std::llround(link.retransmit_timeout_s * 1e9)), kSend,
                   ev.node, ev.arg + 1);
        }
        break;
      }
      case kArrive: {
        if (node.armed) break;
        node.armed = true;
        node.trigger_arrival_true_ns = ev.time;
        std::int64_t second = ev.time / kNsPerSecond + 1;
        while (detail::pps_edge_ns(cfg, ev.node, second) <= ev.time) ++second;
        schedule(detail::pps_edge_ns(cfg, ev.node, second), kPps, ev.node, second);
        break;
      }
      case kPps: {
        node.start_pps_index = ev.arg;
        node.start_edge_true_ns = ev.time;
        if (frame_count > 0) schedule(ev.time, kFrame, ev.node, 0);
        break;
      }
      case kFrame: {
        const std::int64_t k = ev.arg;
        const NodeClockModel clock = cfg.clock(ev.node);
        // Local-time target for frame k, mapped to true time through the
        // edge of the GPS second that contains it.
        const std::int64_t target_local = node.start_pps_index * kNsPerSecond + k * period_ns;
        const std::int64_t s = target_local / kNsPerSecond;
        const std::int64_t frac = target_local - s * kNsPerSecond;
        const double rate = 1.0 + clock.drift_ppm * 1e-6;
        const std::int64_t scheduled =
            detail::pps_edge_ns(cfg, ev.node, s) + static_cast<std::int64_t>(std::llround(static_cast<double>(frac) / rate));
        const double jitter = std::normal_distribution<double>(0.0, 1.0)(frame_rng[ev.node]) * clock.frame_jitter_s;
        FrameStamp stamp;
        stamp.true_capture_ns = scheduled + static_cast<std::int64_t>(std::llround(jitter * 1e9));
        stamp.reported_ns = detail::local_clock_ns(cfg, ev.node, stamp.true_capture_ns);
        node.frames.push_back(stamp);
        if (k + 1 < frame_count) {
          const std::int64_t next_local = target_local + period_ns;
          const std::int64_t ns = next_local / kNsPerSecond;
          const std::int64_t next_true =
              detail::pps_edge_ns(cfg, ev.node, ns) +
              static_cast<std::int64_t>(std::llround(static_cast<double>(next_local - ns * kNsPerSecond) / rate));
          schedule(next_true, kFrame, ev.node, k + 1);
        }
        break;
      }
    }
  }
  return trace;
}

struct NodeErrorStats {
  int node = 0;
  double max_abs_s = 0.0;
  double mean_abs_s = 0.0;
  double mean_s = 0.0;
  double std_s = 0.0;
};

struct TimeErrorReport {
  std::vector<int> nodes;                  // armed node ids, ascending
  std::vector<std::vector<double>> errors;  // [frame][node position], seconds
  std::vector<NodeErrorStats> stats;
  /// Armed nodes started on different PPS edges (whole-second offsets).
  bool start_misaligned = false;
};

/// Per-frame error of each armed node against the mean timestamp of all
/// armed nodes for that frame.
inline TimeErrorReport compute_time_error_report(const SessionTrace& trace) {
  TimeErrorReport rep;
  for (std::size_t n = 0; n < trace.nodes.size(); ++n) {
    if (trace.nodes[n].armed) rep.nodes.push_back(static_cast<int>(n));
  }
  if (rep.nodes.size() < 2) throw Error(ErrorKind::kInsufficientNodes, "need at least 2 armed nodes");
  const std::size_t frames = trace.nodes[rep.nodes.front()].frames.size();
  for (int n : rep.nodes) {
    if (trace.nodes[n].frames.size() != frames) {
      throw Error(ErrorKind::kInsufficientNodes, "armed nodes have unequal frame counts");
    }
    if (trace.nodes[n].start_pps_index != trace.nodes[rep.nodes.front()].start_pps_index) {
      rep.start_misaligned = true;
    }
  }
  const double m = static_cast<double>(rep.nodes.size());
  rep.errors.assign(frames, std::vector<double>(rep.nodes.size(), 0.0));
  for (std::size_t k = 0; k < frames; ++k) {
    const std::int64_t base = trace.nodes[rep.nodes.front()].frames[k].reported_ns;
    std::vector<double> rel(rep.nodes.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < rep.nodes.size(); ++i) {
      rel[i] = static_cast<double>(trace.nodes[rep.nodes[i]].frames[k].reported_ns - base) * 1e-9;
      mean += rel[i];
    }
    mean /= m;
    for (std::size_t i = 0; i < rep.nodes.size(); ++i) rep.errors[k][i] = rel[i] - mean;
  }
  for (std::size_t i = 0; i < rep.nodes.size(); ++i) {
    NodeErrorStats s;
    s.node = rep.nodes[i];
    double sum = 0.0, sum_abs = 0.0, sum_sq = 0.0;
    for (std::size_t k = 0; k < frames; ++k) {
      const double e = rep.errors[k][i];
      sum += e;
      sum_abs += std::abs(e);
      sum_sq += e * e;
      s.max_abs_s = std::max(s.max_abs_s, std::abs(e));
    }
    if (frames > 0) {
      const double f = static_cast<double>(frames);
      s.mean_s = sum / f;
      s.mean_abs_s = sum_abs / f;
      s.std_s = std::sqrt(std::max(0.0, sum_sq / f - s.mean_s * s.mean_s));
    }
    rep.stats.push_back(s);
  }
  return rep;
}

struct BandwidthReport {
  double raw_bytes_per_s = 0.0;      // per node
  double preview_bytes_per_s = 0.0;  // per node
  double aggregate_bytes_per_s = 0.0;  // master ingress
  bool over_budget = false;
};

inline BandwidthReport estimate_bandwidth(const SessionConfig& cfg, std::int64_t points_per_s,
                                          std::int64_t bytes_per_point, double preview_ratio,
                                          double link_budget_bytes_per_s = 5e6) {
  if (!(preview_ratio > 0.0 && preview_ratio <= 1.0) || points_per_s < 0 || bytes_per_point < 0) {
    throw Error(ErrorKind::kConfigInvalid, "bandwidth inputs out of range");
  }
  BandwidthReport r;
  r.raw_bytes_per_s = static_cast<double>(points_per_s) * static_cast<double>(bytes_per_point);
  r.preview_bytes_per_s = r.raw_bytes_per_s * preview_ratio;
  r.aggregate_bytes_per_s = r.preview_bytes_per_s * cfg.node_count;
  r.over_budget = r.aggregate_bytes_per_s > link_budget_bytes_per_s;
  return r;
}

}  // namespace mvlk

#endif  // MVLK_SYNCSIM_HPP
