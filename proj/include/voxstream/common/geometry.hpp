#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace voxstream {

/// Pinhole intrinsics in pixels.
struct CameraIntrinsics {
  float fx = 0.f;
  float fy = 0.f;
  float cx = 0.f;
  float cy = 0.f;
  std::uint32_t width = 0;
  std::uint32_t height = 0;

  void validate() const;
  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// Rigid camera-to-world transform.
struct Pose {
  Eigen::Matrix3f rotation = Eigen::Matrix3f::Identity();
  Eigen::Vector3f translation = Eigen::Vector3f::Zero();

  Eigen::Vector3f to_world(const Eigen::Vector3f& p_cam) const { return rotation * p_cam + translation; }
  Eigen::Vector3f to_camera(const Eigen::Vector3f& p_world) const {
    return rotation.transpose() * (p_world - translation);
  }

  /// Row-major rotation followed by translation (the wire and dataset layout).
  std::array<float, 12> to_array() const;
  static Pose from_array(const std::array<float, 12>& a);

  /// Camera at `eye` looking at `target`; camera axes x right, y down, z forward.
  static Pose look_at(const Eigen::Vector3f& eye, const Eigen::Vector3f& target,
                      const Eigen::Vector3f& world_up = Eigen::Vector3f::UnitY());

  void validate() const;
  friend bool operator==(const Pose& a, const Pose& b) {
    return a.rotation == b.rotation && a.translation == b.translation;
  }
};

}  // namespace voxstream
