#include "voxstream/voxel/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace voxstream {
namespace {

using Vec3 = Eigen::Vector3f;

struct Hit {
  float t = std::numeric_limits<float>::infinity();
  Vec3 base{0.5f, 0.5f, 0.5f};
};

struct Ball {
  Vec3 c;
  float r;
  Vec3 color;
};
struct Box {
  Vec3 lo, hi;
  Vec3 color;
};

struct Scene {
  std::optional<Box> room;  // seen from inside
  std::vector<Box> boxes;
  std::vector<Ball> balls;
};

const Scene& scene_for(SyntheticSceneKind kind) {
  static const Scene room = [] {
    Scene s;
    s.room = Box{{-1.f, 0.f, -1.f}, {1.f, 2.f, 1.f}, {0.85f, 0.8f, 0.7f}};
    s.boxes.push_back({{-0.45f, 0.f, 0.35f}, {0.35f, 0.72f, 0.85f}, {0.55f, 0.35f, 0.2f}});
    s.boxes.push_back({{0.45f, 0.f, -0.75f}, {0.8f, 0.45f, -0.4f}, {0.2f, 0.4f, 0.75f}});
    s.balls.push_back({{-0.55f, 0.25f, -0.5f}, 0.25f, {0.8f, 0.2f, 0.2f}});
    return s;
  }();
  static const Scene sphere = [] {
    Scene s;
    const SphereGeometry g = synthetic_sphere();
    s.balls.push_back({g.center, g.radius, {0.3f, 0.7f, 0.4f}});
    return s;
  }();
  return kind == SyntheticSceneKind::kRoom ? room : sphere;
}

void hit_ball(const Ball& b, const Vec3& o, const Vec3& d, Hit& best) {
  const Vec3 oc = o - b.c;
  const float a = d.squaredNorm();
  const float hb = oc.dot(d);
  const float c = oc.squaredNorm() - b.r * b.r;
  const float disc = hb * hb - a * c;
  if (disc < 0.f) return;
  const float sq = std::sqrt(disc);
  float t = (-hb - sq) / a;
  if (t <= 1e-6f) t = (-hb + sq) / a;
  if (t > 1e-6f && t < best.t) best = {t, b.color};
}

void hit_box(const Box& b, const Vec3& o, const Vec3& d, Hit& best) {
  float t0 = 0.f, t1 = std::numeric_limits<float>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-12f) {
      if (o[i] < b.lo[i] || o[i] > b.hi[i]) return;
      continue;
    }
    float a = (b.lo[i] - o[i]) / d[i];
    float c = (b.hi[i] - o[i]) / d[i];
    if (a > c) std::swap(a, c);
    t0 = std::max(t0, a);
    t1 = std::min(t1, c);
  }
  if (t0 <= t1 && t0 > 1e-6f && t0 < best.t) best = {t0, b.color};
}

void hit_room(const Box& b, const Vec3& o, const Vec3& d, Hit& best) {
  float t = std::numeric_limits<float>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (d[i] > 0.f) t = std::min(t, (b.hi[i] - o[i]) / d[i]);
    else if (d[i] < 0.f) t = std::min(t, (b.lo[i] - o[i]) / d[i]);
  }
  if (t > 1e-6f && t < best.t) best = {t, b.color};
}

std::uint8_t channel(float v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.f), 0l, 255l)); }

}  // namespace

SyntheticSceneKind parse_scene_kind(const std::string& name) {
  if (name == "room") return SyntheticSceneKind::kRoom;
  if (name == "sphere") return SyntheticSceneKind::kSphere;
  throw std::invalid_argument("unknown synthetic scene: " + name);
}

SphereGeometry synthetic_sphere() { return {{0.013f, 0.021f, -0.007f}, 0.25f}; }

SensorInfo synthetic_sensor(const SyntheticConfig& cfg) {
  SensorInfo s;
  const float fy = 0.5f * static_cast<float>(cfg.height) /
                   std::tan(0.5f * cfg.fov_y_deg * std::numbers::pi_v<float> / 180.f);
  s.intrinsics = {fy, fy, 0.5f * static_cast<float>(cfg.width) - 0.5f, 0.5f * static_cast<float>(cfg.height) - 0.5f,
                  cfg.width, cfg.height};
  s.near_m = 0.1f;
  s.far_m = 6.f;
  return s;
}

Pose synthetic_pose(const SyntheticConfig& cfg, std::uint32_t index) {
  const float frac = cfg.frames > 1 ? static_cast<float>(index) / static_cast<float>(cfg.frames) : 0.f;
  const float angle = 2.f * std::numbers::pi_v<float> * cfg.sweep * frac;
  if (cfg.scene == SyntheticSceneKind::kRoom) {
    const Vec3 eye(0.05f, 1.3f, 0.05f);
    const Vec3 target = eye + Vec3(std::sin(angle), -0.45f, -std::cos(angle));
    return Pose::look_at(eye, target);
  }
  const SphereGeometry g = synthetic_sphere();
  const float elevation = 0.35f * std::sin(2.f * angle);
  const Vec3 eye = g.center + 0.9f * Vec3(std::sin(angle) * std::cos(elevation), std::sin(elevation),
                                          -std::cos(angle) * std::cos(elevation));
  return Pose::look_at(eye, g.center);
}

Frame render_view(const SyntheticConfig& cfg, const Pose& pose, std::uint64_t timestamp_us) {
  const SensorInfo sensor = synthetic_sensor(cfg);
  const CameraIntrinsics& k = sensor.intrinsics;
  const Scene& scene = scene_for(cfg.scene);
  Frame f;
  f.timestamp_us = timestamp_us;
  f.pose = pose;
  f.width = cfg.width;
  f.height = cfg.height;
  f.depth.assign(static_cast<std::size_t>(cfg.width) * cfg.height, 0.f);
  f.rgb.assign(f.depth.size() * 3, 0);
  for (std::uint32_t v = 0; v < cfg.height; ++v) {
    for (std::uint32_t u = 0; u < cfg.width; ++u) {
      // Unnormalized direction with unit camera z, so the hit parameter is z-depth.
      const Vec3 dir_cam((static_cast<float>(u) - k.cx) / k.fx, (static_cast<float>(v) - k.cy) / k.fy, 1.f);
      const Vec3 d = pose.rotation * dir_cam;
      const Vec3& o = pose.translation;
      Hit best;
      if (scene.room) hit_room(*scene.room, o, d, best);
      for (const Box& b : scene.boxes) hit_box(b, o, d, best);
      for (const Ball& b : scene.balls) hit_ball(b, o, d, best);
      if (!std::isfinite(best.t) || best.t < sensor.near_m || best.t > sensor.far_m) continue;
      const Vec3 p = o + d * best.t;
      const int cell = static_cast<int>(std::floor(p.x() * 10.f) + std::floor(p.y() * 10.f) + std::floor(p.z() * 10.f));
      const float shade = (cell & 1) ? 1.f : 0.7f;
      const std::size_t i = static_cast<std::size_t>(v) * cfg.width + u;
      f.depth[i] = best.t;
      f.rgb[3 * i] = channel(best.base.x() * shade);
      f.rgb[3 * i + 1] = channel(best.base.y() * shade);
      f.rgb[3 * i + 2] = channel(best.base.z() * shade);
    }
  }
  return f;
}

Frame render_synthetic(const SyntheticConfig& cfg, std::uint32_t index) {
  const auto ts = static_cast<std::uint64_t>(std::llround(static_cast<double>(index) * 1e6 / cfg.fps));
  return render_view(cfg, synthetic_pose(cfg, index), ts);
}

std::size_t write_synthetic_sequence(const SyntheticConfig& cfg, const std::filesystem::path& path) {
  SequenceWriter writer(path, synthetic_sensor(cfg));
  for (std::uint32_t i = 0; i < cfg.frames; ++i) writer.write(render_synthetic(cfg, i));
  return writer.frames_written();
}

}  // namespace voxstream
