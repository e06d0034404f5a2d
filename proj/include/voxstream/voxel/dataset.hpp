#pragma once

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <stdexcept>

#include "voxstream/voxel/frame.hpp"

namespace voxstream {

/// Sequence-level camera description stored in the dataset header.
struct SensorInfo {
  CameraIntrinsics intrinsics;
  float near_m = 0.1f;
  float far_m = 8.f;
  friend bool operator==(const SensorInfo&, const SensorInfo&) = default;
};

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Writes "VCSEQ1" replay files (little-endian).
class SequenceWriter {
 public:
  SequenceWriter(const std::filesystem::path& path, const SensorInfo& sensor);
  void write(const Frame& frame);
  std::size_t frames_written() const { return frames_; }

 private:
  std::ofstream out_;
  SensorInfo sensor_;
  std::size_t frames_ = 0;
};

/// Streams frames out of a "VCSEQ1" replay file.
class SequenceReader {
 public:
  explicit SequenceReader(const std::filesystem::path& path);
  const SensorInfo& sensor() const { return sensor_; }
  /// Next frame, or nullopt at a clean end of file. Throws DatasetError on
  /// truncated or inconsistent records.
  std::optional<Frame> next();

 private:
  std::ifstream in_;
  SensorInfo sensor_;
};

}  // namespace voxstream
