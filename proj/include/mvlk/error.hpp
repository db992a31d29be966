/*
 * mvlk - multi-view LiDAR toolkit
 *
 * Error type shared by every module. Each failure carries a kind that the
 * CLI maps onto its exit-code taxonomy.
 */

#ifndef MVLK_ERROR_HPP
#define MVLK_ERROR_HPP

#include <stdexcept>
#include <string>

namespace mvlk {

enum class ErrorKind {
  // bad input / format (exit 2)
  kBadMagic,
  kTruncatedPayload,
  kVersionUnsupported,
  kBadRecord,
  kEmptyInput,
  kIo,
  // algorithmic failure (exit 3)
  kDegenerateConfiguration,
  kNoConsensus,
  kNoCorrespondences,
  kCalibrationFailed,
  kBehindCamera,
  kTimestampSkew,
  kDegenerateYaw,
  kNoPlane,
  kDegenerate,
  kInsufficientNodes,
  kNoGroundTruth,
  // configuration (exit 4)
  kConfigInvalid,
  kSpecInvalid,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kBadMagic: return "bad-magic";
    case ErrorKind::kTruncatedPayload: return "truncated-payload";
    case ErrorKind::kVersionUnsupported: return "version-unsupported";
    case ErrorKind::kBadRecord: return "bad-record";
    case ErrorKind::kEmptyInput: return "empty-input";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kDegenerateConfiguration: return "degenerate-configuration";
    case ErrorKind::kNoConsensus: return "no-consensus";
    case ErrorKind::kNoCorrespondences: return "no-correspondences";
    case ErrorKind::kCalibrationFailed: return "calibration-failed";
    case ErrorKind::kBehindCamera: return "behind-camera";
    case ErrorKind::kTimestampSkew: return "timestamp-skew";
    case ErrorKind::kDegenerateYaw: return "degenerate-yaw";
    case ErrorKind::kNoPlane: return "no-plane";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kInsufficientNodes: return "insufficient-nodes";
    case ErrorKind::kNoGroundTruth: return "no-ground-truth";
    case ErrorKind::kConfigInvalid: return "config-invalid";
    case ErrorKind::kSpecInvalid: return "spec-invalid";
  }
  return "unknown";
}

/// Process exit code for an error kind: 2 data, 3 algorithmic, 4 config.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kBadMagic:
    case ErrorKind::kTruncatedPayload:
    case ErrorKind::kVersionUnsupported:
    case ErrorKind::kBadRecord:
    case ErrorKind::kEmptyInput:
    case ErrorKind::kIo:
      return 2;
    case ErrorKind::kConfigInvalid:
    case ErrorKind::kSpecInvalid:
      return 4;
    default:
      return 3;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace mvlk

#endif  // MVLK_ERROR_HPP
