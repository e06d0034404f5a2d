#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "voxstream/voxel/dataset.hpp"

namespace voxstream {

enum class SyntheticSceneKind { kRoom, kSphere };

/// Parses "room" or "sphere"; throws std::invalid_argument otherwise.
SyntheticSceneKind parse_scene_kind(const std::string& name);

/// Analytic scenes rendered by ray casting, with y up and meters as units.
///
/// room: a 2 m cube interior with a table, a box and a ball; the camera
/// stands near the middle and turns once around the vertical axis.
/// sphere: a single ball orbited by the camera at constant distance.
struct SyntheticConfig {
  SyntheticSceneKind scene = SyntheticSceneKind::kRoom;
  std::uint32_t width = 160;
  std::uint32_t height = 120;
  float fov_y_deg = 55.f;
  std::uint32_t frames = 90;
  float fps = 30.f;
  /// Fraction of a full turn covered by the trajectory.
  float sweep = 1.f;
};

struct SphereGeometry {
  Eigen::Vector3f center;
  float radius;
};

/// The sphere of the sphere scene.
SphereGeometry synthetic_sphere();

SensorInfo synthetic_sensor(const SyntheticConfig& cfg);
Pose synthetic_pose(const SyntheticConfig& cfg, std::uint32_t index);
Frame render_synthetic(const SyntheticConfig& cfg, std::uint32_t index);
/// Renders an arbitrary view of the configured scene.
Frame render_view(const SyntheticConfig& cfg, const Pose& pose, std::uint64_t timestamp_us = 0);

/// Writes the whole sequence; returns the number of frames.
std::size_t write_synthetic_sequence(const SyntheticConfig& cfg, const std::filesystem::path& path);

}  // namespace voxstream
