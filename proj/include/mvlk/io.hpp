/*
 * mvlk - multi-view LiDAR toolkit
 *
 * File formats: the binary frame file, an ASCII XYZ converter, and
 * JSON-lines records for detections, annotations, trajectories and
 * calibrations. Every writer goes through a temp file and a rename.
 */

#ifndef MVLK_IO_HPP
#define MVLK_IO_HPP

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "mvlk/error.hpp"
#include "mvlk/geometry.hpp"
#include "mvlk/tracking.hpp"

namespace mvlk {

static_assert(std::endian::native == std::endian::little, "frame I/O assumes a little-endian host");

inline constexpr std::array<char, 4> kFrameMagic = {'M', 'V', 'L', 'C'};
inline constexpr std::uint16_t kFrameVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 24;
inline constexpr std::uint16_t kFlagIntensity = 1u << 0;
inline constexpr std::uint16_t kFlagTimeIndex = 1u << 1;
inline constexpr std::uint16_t kFlagSource = 1u << 2;
/// node_id value stored when the cloud has no source node.
inline constexpr std::uint16_t kNoNode = 0xFFFF;

inline std::size_t frame_record_size(std::uint16_t flags) {
  std::size_t n = 12;
  if (flags & kFlagIntensity) n += 4;
  if (flags & kFlagTimeIndex) n += 2;
  if (flags & kFlagSource) n += 2;
  return n;
}

namespace detail {

template <typename T>
void put(std::string& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

template <typename T>
T get(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

}  // namespace detail

/// Serializes a cloud. Coordinates and intensity are narrowed to float32.
inline std::string encode_frame(const PointCloud& cloud) {
  if (!cloud.valid()) throw Error(ErrorKind::kBadRecord, "cloud attributes are inconsistent");
  if (cloud.size() > UINT32_MAX) throw Error(ErrorKind::kBadRecord, "too many points for one frame");
  std::uint16_t flags = 0;
  if (cloud.has_intensity()) flags |= kFlagIntensity;
  if (cloud.has_time_index()) flags |= kFlagTimeIndex;
  if (cloud.has_point_source()) flags |= kFlagSource;
  std::string buf;
  buf.reserve(kFrameHeaderSize + cloud.size() * frame_record_size(flags));
  buf.append(kFrameMagic.data(), kFrameMagic.size());
  detail::put<std::uint16_t>(buf, kFrameVersion);
  detail::put<std::uint16_t>(buf, flags);
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(cloud.size()));
  detail::put<std::uint64_t>(buf, static_cast<std::uint64_t>(cloud.timestamp_ns));
  detail::put<std::uint16_t>(buf, cloud.source_node.value_or(kNoNode));
  detail::put<std::uint16_t>(buf, 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int a = 0; a < 3; ++a) detail::put<float>(buf, static_cast<float>(cloud.points[i][a]));
    if (flags & kFlagIntensity) detail::put<float>(buf, static_cast<float>(cloud.intensity[i]));
    if (flags & kFlagTimeIndex) detail::put<std::uint16_t>(buf, cloud.time_index[i]);
    if (flags & kFlagSource) detail::put<std::uint16_t>(buf, cloud.point_source[i]);
  }
  return buf;
}

inline PointCloud decode_frame(std::string_view data) {
  if (data.size() < 4 || std::memcmp(data.data(), kFrameMagic.data(), 4) != 0) {
    throw Error(ErrorKind::kBadMagic, "missing MVLC magic");
  }
  if (data.size() < kFrameHeaderSize) throw Error(ErrorKind::kTruncatedPayload, "header truncated");
  const char* p = data.data();
  const auto version = detail::get<std::uint16_t>(p + 4);
  if (version != kFrameVersion) {
    throw Error(ErrorKind::kVersionUnsupported, "frame version " + std::to_string(version));
  }
  const auto flags = detail::get<std::uint16_t>(p + 6);
  if (flags & ~(kFlagIntensity | kFlagTimeIndex | kFlagSource)) {
    throw Error(ErrorKind::kBadRecord, "unknown frame flags");
  }
  const auto count = detail::get<std::uint32_t>(p + 8);
  const auto stamp = detail::get<std::uint64_t>(p + 12);
  const auto node = detail::get<std::uint16_t>(p + 20);
  const std::size_t rec = frame_record_size(flags);
  const std::size_t expected = kFrameHeaderSize + static_cast<std::size_t>(count) * rec;
  if (data.size() < expected) {
    throw Error(ErrorKind::kTruncatedPayload, "declared " + std::to_string(count) + " points, payload holds " +
                                                  std::to_string((data.size() - kFrameHeaderSize) / rec));
  }
  if (data.size() > expected) throw Error(ErrorKind::kBadRecord, "trailing bytes after payload");
  if (stamp > static_cast<std::uint64_t>(INT64_MAX)) throw Error(ErrorKind::kBadRecord, "timestamp out of range");

  PointCloud cloud;
  cloud.timestamp_ns = static_cast<std::int64_t>(stamp);
  if (node != kNoNode) cloud.source_node = node;
  cloud.points.resize(count);
  if (flags & kFlagIntensity) cloud.intensity.resize(count);
  if (flags & kFlagTimeIndex) cloud.time_index.resize(count);
  if (flags & kFlagSource) cloud.point_source.resize(count);
  const char* r = p + kFrameHeaderSize;
  for (std::uint32_t i = 0; i < count; ++i, r += rec) {
    const char* f = r;
    for (int a = 0; a < 3; ++a, f += 4) cloud.points[i][a] = detail::get<float>(f);
    if (!cloud.points[i].allFinite()) throw Error(ErrorKind::kBadRecord, "non-finite coordinate");
    if (flags & kFlagIntensity) {
      cloud.intensity[i] = detail::get<float>(f);
      f += 4;
    }
    if (flags & kFlagTimeIndex) {
      cloud.time_index[i] = detail::get<std::uint16_t>(f);
      f += 2;
    }
    if (flags & kFlagSource) cloud.point_source[i] = detail::get<std::uint16_t>(f);
  }
  return cloud;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes `content` to a sibling temp file, then renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::kIo, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorKind::kIo, "cannot rename onto " + path.string());
  }
}

inline PointCloud read_frame(const std::filesystem::path& path) { return decode_frame(read_file(path)); }

inline void write_frame(const std::filesystem::path& path, const PointCloud& cloud) {
  write_file_atomic(path, encode_frame(cloud));
}

/// ASCII XYZ: one "x y z [intensity]" line per point, '#' comments allowed.
inline PointCloud parse_xyz(std::string_view text) {
  PointCloud cloud;
  std::istringstream in{std::string(text)};
  std::string line;
  int columns = -1;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    if (!ls.eof()) throw Error(ErrorKind::kBadRecord, "xyz line " + std::to_string(lineno) + " is not numeric");
    if (v.empty()) continue;
    if (v.size() != 3 && v.size() != 4) {
      throw Error(ErrorKind::kBadRecord, "xyz line " + std::to_string(lineno) + " needs 3 or 4 columns");
    }
    if (columns < 0) columns = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != columns) {
      throw Error(ErrorKind::kBadRecord, "xyz line " + std::to_string(lineno) + " changes column count");
    }
    cloud.points.emplace_back(v[0], v[1], v[2]);
    if (columns == 4) cloud.intensity.push_back(v[3]);
  }
  if (!cloud.valid()) throw Error(ErrorKind::kBadRecord, "xyz contains non-finite values");
  return cloud;
}

inline std::string format_xyz(const PointCloud& cloud) {
  std::ostringstream out;
  out.precision(9);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    out << p.x() << ' ' << p.y() << ' ' << p.z();
    if (cloud.has_intensity()) out << ' ' << cloud.intensity[i];
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// JSON-lines records
// ---------------------------------------------------------------------------

using Json = nlohmann::json;

struct DetectionRecord {
  int frame = 0;
  Box3D box;  // track_id set for annotations and trajectories
};

struct CalibrationRecord {
  int node_id = 0;
  RigidTransform transform;
  double fitness = 0.0;
  double inlier_rmse = 0.0;
};

namespace detail {

inline double finite_number(const Json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number()) {
    throw Error(ErrorKind::kBadRecord, std::string("missing numeric field '") + key + "'");
  }
  const double v = j[key].get<double>();
  if (!std::isfinite(v)) throw Error(ErrorKind::kBadRecord, std::string("non-finite field '") + key + "'");
  return v;
}

template <std::size_t N>
std::array<double, N> number_array(const Json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != N) {
    throw Error(ErrorKind::kBadRecord, std::string("field '") + key + "' needs " + std::to_string(N) + " numbers");
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!j[key][i].is_number()) throw Error(ErrorKind::kBadRecord, std::string("field '") + key + "' not numeric");
    out[i] = j[key][i].get<double>();
    if (!std::isfinite(out[i])) throw Error(ErrorKind::kBadRecord, std::string("non-finite in '") + key + "'");
  }
  return out;
}

inline std::int64_t integer_field(const Json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_integer()) {
    throw Error(ErrorKind::kBadRecord, std::string("missing integer field '") + key + "'");
  }
  return j[key].get<std::int64_t>();
}

inline Json vec_json(const Eigen::Vector3d& v) { return Json::array({v.x(), v.y(), v.z()}); }

}  // namespace detail

/// Detection, annotation (with track_id) or trajectory record.
inline Json to_json(const DetectionRecord& r) {
  Json j;
  j["frame"] = r.frame;
  if (r.box.track_id) j["track_id"] = *r.box.track_id;
  j["class"] = to_string(r.box.class_label);
  j["center"] = detail::vec_json(r.box.center);
  j["size"] = detail::vec_json(r.box.size);
  j["yaw"] = r.box.yaw;
  j["score"] = r.box.score;
  return j;
}

inline DetectionRecord detection_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kBadRecord, "record is not an object");
  DetectionRecord r;
  const auto frame = detail::integer_field(j, "frame");
  if (frame < 0 || frame > INT32_MAX) throw Error(ErrorKind::kBadRecord, "frame out of range");
  r.frame = static_cast<int>(frame);
  if (!j.contains("class") || !j["class"].is_string()) throw Error(ErrorKind::kBadRecord, "missing 'class'");
  const auto cls = parse_class(j["class"].get<std::string>());
  if (!cls) throw Error(ErrorKind::kBadRecord, "unknown class '" + j["class"].get<std::string>() + "'");
  r.box.class_label = *cls;
  const auto c = detail::number_array<3>(j, "center");
  const auto s = detail::number_array<3>(j, "size");
  r.box.center = {c[0], c[1], c[2]};
  r.box.size = {s[0], s[1], s[2]};
  r.box.yaw = detail::finite_number(j, "yaw");
  r.box.score = j.contains("score") ? detail::finite_number(j, "score") : 1.0;
  if (j.contains("track_id")) r.box.track_id = detail::integer_field(j, "track_id");
  if (!r.box.valid()) throw Error(ErrorKind::kBadRecord, "box has non-positive size");
  return r;
}

inline Json to_json(const CalibrationRecord& r) {
  Json j;
  j["node_id"] = r.node_id;
  Json rot = Json::array();
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) rot.push_back(r.transform.rotation(i, k));
  }
  j["rotation"] = rot;
  j["translation"] = detail::vec_json(r.transform.translation);
  j["fitness"] = r.fitness;
  j["inlier_rmse"] = r.inlier_rmse;
  return j;
}

inline CalibrationRecord calibration_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kBadRecord, "record is not an object");
  CalibrationRecord r;
  r.node_id = static_cast<int>(detail::integer_field(j, "node_id"));
  const auto rot = detail::number_array<9>(j, "rotation");
  const auto t = detail::number_array<3>(j, "translation");
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) r.transform.rotation(i, k) = rot[i * 3 + k];
  }
  r.transform.translation = {t[0], t[1], t[2]};
  if (j.contains("fitness")) r.fitness = detail::finite_number(j, "fitness");
  if (j.contains("inlier_rmse")) r.inlier_rmse = detail::finite_number(j, "inlier_rmse");
  if (!r.transform.valid(1e-6)) throw Error(ErrorKind::kBadRecord, "rotation is not orthonormal");
  return r;
}

/// Splits JSON-lines text, skipping blank lines. Parse failures report the
/// line number.
template <typename F>
void for_each_json_line(std::string_view text, F&& fn) {
  std::size_t pos = 0, lineno = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw Error(ErrorKind::kBadRecord, "line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      fn(j);
    } catch (const Error& e) {
      throw Error(e.kind(), "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline std::string dump_line(const Json& j) { return j.dump() + "\n"; }

inline std::string format_detections(std::span<const DetectionRecord> records) {
  std::string out;
  for (const auto& r : records) out += dump_line(to_json(r));
  return out;
}

inline std::vector<DetectionRecord> parse_detections(std::string_view text) {
  std::vector<DetectionRecord> out;
  for_each_json_line(text, [&](const Json& j) { out.push_back(detection_from_json(j)); });
  return out;
}

inline std::vector<DetectionRecord> read_detections(const std::filesystem::path& path) {
  return parse_detections(read_file(path));
}

inline void write_detections(const std::filesystem::path& path, std::span<const DetectionRecord> records) {
  write_file_atomic(path, format_detections(records));
}

/// Trajectory set as records sorted by (track id, frame).
inline std::vector<DetectionRecord> trajectory_records(const TrajectorySet& set) {
  std::vector<DetectionRecord> out;
  for (const auto& [id, points] : set) {
    for (const auto& p : points) {
      DetectionRecord r{p.frame, p.box};
      r.box.track_id = id;
      out.push_back(r);
    }
  }
  return out;
}

inline TrajectorySet trajectories_from_records(std::span<const DetectionRecord> records) {
  TrajectorySet set;
  for (const auto& r : records) {
    if (!r.box.track_id) throw Error(ErrorKind::kBadRecord, "trajectory record without track_id");
    set[*r.box.track_id].push_back({r.frame, r.box});
  }
  for (auto& [id, points] : set) {
    std::stable_sort(points.begin(), points.end(),
                     [](const TrajectoryPoint& a, const TrajectoryPoint& b) { return a.frame < b.frame; });
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (points[i].frame == points[i - 1].frame) {
        throw Error(ErrorKind::kBadRecord, "track " + std::to_string(id) + " has two boxes in frame " +
                                               std::to_string(points[i].frame));
      }
    }
  }
  return set;
}

inline std::string format_calibrations(std::span<const CalibrationRecord> records) {
  std::string out;
  for (const auto& r : records) out += dump_line(to_json(r));
  return out;
}

inline std::vector<CalibrationRecord> parse_calibrations(std::string_view text) {
  std::vector<CalibrationRecord> out;
  for_each_json_line(text, [&](const Json& j) { out.push_back(calibration_from_json(j)); });
  return out;
}

inline std::map<std::uint16_t, RigidTransform> extrinsic_map(std::span<const CalibrationRecord> records) {
  std::map<std::uint16_t, RigidTransform> out;
  for (const auto& r : records) {
    if (r.node_id < 0 || r.node_id >= kNoNode) throw Error(ErrorKind::kBadRecord, "node_id out of range");
    out[static_cast<std::uint16_t>(r.node_id)] = r.transform;
  }
  return out;
}

}  // namespace mvlk

#endif  // MVLK_IO_HPP
