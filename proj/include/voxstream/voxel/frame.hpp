#pragma once

#include <cstdint>
#include <vector>

#include "voxstream/common/geometry.hpp"
#include "voxstream/voxel/tsdf.hpp"

namespace voxstream {

/// One RGB-D observation with its ground-truth camera pose. Depth is in
/// meters, 0 = invalid; color is packed RGB, row-major.
struct Frame {
  std::uint64_t timestamp_us = 0;
  Pose pose;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> depth;
  std::vector<std::uint8_t> rgb;

  float depth_at(std::uint32_t u, std::uint32_t v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
  Rgb color_at(std::uint32_t u, std::uint32_t v) const {
    const std::size_t i = 3 * (static_cast<std::size_t>(v) * width + u);
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }
  /// Throws std::invalid_argument when buffer sizes disagree with width/height.
  void validate() const;
};

/// Viewing volume used for visibility decisions.
struct Frustum {
  Pose pose;
  CameraIntrinsics intrinsics;
  float near_m = 0.1f;
  float far_m = 8.f;
  float margin_m = 0.f;

  void validate() const;
};

}  // namespace voxstream
