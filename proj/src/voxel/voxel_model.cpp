#include "voxstream/voxel/voxel_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace voxstream {
namespace {

std::int32_t ifloor(float v) { return static_cast<std::int32_t>(std::floor(v)); }
std::int32_t iceil(float v) { return static_cast<std::int32_t>(std::ceil(v)); }

bool valid_depth(float d, const FusionConfig& cfg) { return d >= cfg.min_depth && d <= cfg.max_depth; }

struct KeyRange {
  BlockKey lo, hi;
  friend bool operator==(const KeyRange&, const KeyRange&) = default;
};

// Blocks holding any corner of the voxel cubes that contain q (voxel units).
KeyRange footprint(const Eigen::Vector3f& q) {
  KeyRange r;
  std::array<std::int32_t, 3> lo{}, hi{};
  for (int i = 0; i < 3; ++i) {
    lo[i] = floor_div(iceil(q[i]) - 1, kBlockEdge);
    hi[i] = floor_div(ifloor(q[i]) + 1, kBlockEdge);
  }
  r.lo = {lo[0], lo[1], lo[2]};
  r.hi = {hi[0], hi[1], hi[2]};
  return r;
}

std::vector<BlockKey> sorted(KeySet&& set) {
  std::vector<BlockKey> out(set.begin(), set.end());
  std::sort(out.begin(), out.end());
  return out;
}

struct Plane {
  Eigen::Vector3f n;
  float d;
};

std::array<Plane, 6> world_planes(const Frustum& f) {
  const CameraIntrinsics& k = f.intrinsics;
  const float left = (-0.5f - k.cx) / k.fx;
  const float right = (static_cast<float>(k.width) - 0.5f - k.cx) / k.fx;
  const float top = (-0.5f - k.cy) / k.fy;
  const float bottom = (static_cast<float>(k.height) - 0.5f - k.cy) / k.fy;
  std::array<Plane, 6> cam = {{
      {{1.f, 0.f, -left}, 0.f},
      {{-1.f, 0.f, right}, 0.f},
      {{0.f, 1.f, -top}, 0.f},
      {{0.f, -1.f, bottom}, 0.f},
      {{0.f, 0.f, 1.f}, -f.near_m},
      {{0.f, 0.f, -1.f}, f.far_m},
  }};
  for (Plane& p : cam) {
    const float len = p.n.norm();
    p.n /= len;
    p.d /= len;
    p.n = f.pose.rotation * p.n;
    p.d -= p.n.dot(f.pose.translation);
  }
  return cam;
}

}  // namespace

std::vector<BlockKey> blocks_along_rays(const Frame& frame, const CameraIntrinsics& intrinsics,
                                        const FusionConfig& cfg) {
  if (frame.width != intrinsics.width || frame.height != intrinsics.height) {
    throw std::invalid_argument("frame size does not match intrinsics");
  }
  const float inv_s = 1.f / cfg.voxel_size;
  const float mu = cfg.truncation;
  KeySet keys;
  for (std::uint32_t v = 0; v < frame.height; ++v) {
    for (std::uint32_t u = 0; u < frame.width; ++u) {
      const float d = frame.depth_at(u, v);
      if (!valid_depth(d, cfg)) continue;
      const Eigen::Vector3f dir((static_cast<float>(u) - intrinsics.cx) / intrinsics.fx,
                                (static_cast<float>(v) - intrinsics.cy) / intrinsics.fy, 1.f);
      const Eigen::Vector3f a = frame.pose.to_world(dir * std::max(d - mu, 0.f)) * inv_s;
      const Eigen::Vector3f b = frame.pose.to_world(dir * (d + mu)) * inv_s;
      // Half-voxel steps never skip a cube that the segment passes through.
      const int steps = std::max(1, iceil((b - a).norm() / 0.5f));
      std::optional<KeyRange> prev;
      for (int i = 0; i <= steps; ++i) {
        const KeyRange r = footprint(a + (b - a) * (static_cast<float>(i) / static_cast<float>(steps)));
        if (prev && *prev == r) continue;
        prev = r;
        for (std::int32_t z = r.lo.z; z <= r.hi.z; ++z)
          for (std::int32_t y = r.lo.y; y <= r.hi.y; ++y)
            for (std::int32_t x = r.lo.x; x <= r.hi.x; ++x) keys.insert({x, y, z});
      }
    }
  }
  return sorted(std::move(keys));
}

bool frustum_intersects_block(const Frustum& frustum, const BlockKey& key, const FusionConfig& cfg) {
  const float edge = cfg.block_size();
  const Eigen::Vector3f lo(key.x * edge, key.y * edge, key.z * edge);
  const Eigen::Vector3f hi = lo + Eigen::Vector3f::Constant(edge);
  const Eigen::Vector3f& c = frustum.pose.translation;
  const float m = frustum.margin_m;
  if ((c.array() >= lo.array() - m).all() && (c.array() <= hi.array() + m).all()) return true;
  for (const Plane& p : world_planes(frustum)) {
    Eigen::Vector3f far_corner;
    for (int i = 0; i < 3; ++i) far_corner[i] = p.n[i] >= 0.f ? hi[i] : lo[i];
    if (p.n.dot(far_corner) + p.d < -m) return false;
  }
  return true;
}

VoxelModel::VoxelModel(FusionConfig cfg, HashConfig hash_cfg, std::uint32_t pool_capacity, unsigned threads)
    : cfg_(cfg), threads_(std::max(1u, threads)), store_((cfg.validate(), hash_cfg), pool_capacity) {}

std::vector<BlockKey> VoxelModel::allocate_keys(const std::vector<BlockKey>& band) {
  std::vector<BlockKey> out;
  bool exhausted = false;
  std::mutex mu;
  parallel_for(
      band.size(),
      [&](std::size_t b, std::size_t e) {
        std::vector<BlockKey> created;
        bool full = false;
        for (std::size_t i = b; i < e && !full; ++i) {
          const auto r = store_.upsert(band[i], [](Block&) {});
          if (!r.ok()) full = true;
          else if (r.created) created.push_back(band[i]);
        }
        std::lock_guard lock(mu);
        exhausted = exhausted || full;
        out.insert(out.end(), created.begin(), created.end());
      },
      threads_);
  if (exhausted) throw std::length_error("voxel block map capacity exhausted");
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<BlockKey> VoxelModel::integrate_keys(const std::vector<BlockKey>& band, const Frame& frame,
                                                 const CameraIntrinsics& k) {
  frame.validate();
  const float s = cfg_.voxel_size;
  const float mu = cfg_.truncation;
  const Eigen::Matrix3f rt = frame.pose.rotation.transpose();
  const Eigen::Vector3f ex = rt.col(0) * s, ey = rt.col(1) * s, ez = rt.col(2) * s;
  const int w = static_cast<int>(frame.width), h = static_cast<int>(frame.height);

  std::vector<std::uint8_t> touched(band.size(), 0);
  parallel_for(
      band.size(),
      [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
          const BlockKey& key = band[i];
          const Eigen::Vector3f origin(static_cast<float>(key.x * kBlockEdge) * s,
                                       static_cast<float>(key.y * kBlockEdge) * s,
                                       static_cast<float>(key.z * kBlockEdge) * s);
          const Eigen::Vector3f o = frame.pose.to_camera(origin);
          store_.modify(key, [&](Block& block) {
            bool any = false;
            for (int z = 0; z < kBlockEdge; ++z) {
              for (int y = 0; y < kBlockEdge; ++y) {
                const Eigen::Vector3f row = o + ey * static_cast<float>(y) + ez * static_cast<float>(z);
                for (int x = 0; x < kBlockEdge; ++x) {
                  const Eigen::Vector3f pc = row + ex * static_cast<float>(x);
                  if (pc.z() <= 0.f) continue;
                  const float iz = 1.f / pc.z();
                  const float fu = k.fx * pc.x() * iz + k.cx;
                  const float fv = k.fy * pc.y() * iz + k.cy;
                  // Round half away from zero without a libm call; negatives are rejected.
                  if (!(fu > -0.5f && fv > -0.5f && fu < static_cast<float>(w) && fv < static_cast<float>(h)))
                    continue;
                  const int u = static_cast<int>(fu + 0.5f);
                  const int v = static_cast<int>(fv + 0.5f);
                  if (u >= w || v >= h) continue;
                  const float d = frame.depth_at(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v));
                  if (!valid_depth(d, cfg_)) continue;
                  const float sdf = d - pc.z();
                  if (sdf < -mu) continue;
                  const float f = std::min(1.f, sdf / mu);
                  const Rgb c = frame.color_at(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v));
                  TsdfVoxel& vox = block.voxels[voxel_index(x, y, z)];
                  const float wt = vox.weight;
                  const float inv = 1.f / (wt + 1.f);
                  auto blend = [&](std::uint8_t old, std::uint8_t sample) {
                    const float m = (static_cast<float>(old) * wt + static_cast<float>(sample)) * inv;
                    return static_cast<std::uint8_t>(std::min(m + 0.5f, 255.f));
                  };
                  vox.tsdf = (vox.tsdf * wt + f) * inv;
                  vox.color = {blend(vox.color.r, c.r), blend(vox.color.g, c.g), blend(vox.color.b, c.b)};
                  vox.weight = std::min(wt + 1.f, cfg_.max_weight);
                  any = true;
                }
              }
            }
            if (any) {
              ++block.updates;
              touched[i] = 1;
            }
          });
        }
      },
      threads_);

  std::vector<BlockKey> out;
  for (std::size_t i = 0; i < band.size(); ++i)
    if (touched[i]) out.push_back(band[i]);
  {
    std::lock_guard lock(visible_mu_);
    visible_.insert(out.begin(), out.end());
  }
  return out;
}

std::vector<BlockKey> VoxelModel::allocate_blocks(const Frame& frame, const CameraIntrinsics& intrinsics) {
  return allocate_keys(blocks_along_rays(frame, intrinsics, cfg_));
}

std::vector<BlockKey> VoxelModel::integrate_frame(const Frame& frame, const CameraIntrinsics& intrinsics) {
  return integrate_keys(blocks_along_rays(frame, intrinsics, cfg_), frame, intrinsics);
}

VoxelModel::FuseResult VoxelModel::fuse_frame(const Frame& frame, const CameraIntrinsics& intrinsics) {
  const std::vector<BlockKey> band = blocks_along_rays(frame, intrinsics, cfg_);
  FuseResult r;
  r.allocated = allocate_keys(band);
  r.touched = integrate_keys(band, frame, intrinsics);
  return r;
}

std::vector<BlockKey> VoxelModel::retire_invisible(const Frustum& frustum) {
  KeySet retired;
  std::lock_guard lock(visible_mu_);
  for (auto it = visible_.begin(); it != visible_.end();) {
    if (!frustum_intersects_block(frustum, *it, cfg_)) {
      retired.insert(*it);
      it = visible_.erase(it);
    } else {
      ++it;
    }
  }
  return sorted(std::move(retired));
}

std::size_t VoxelModel::delete_blocks(const std::vector<BlockKey>& keys) {
  std::size_t n = 0;
  std::lock_guard lock(visible_mu_);
  for (const BlockKey& k : keys) {
    if (store_.erase(k)) ++n;
    visible_.erase(k);
  }
  return n;
}

std::optional<TsdfVoxels> VoxelModel::voxels(const BlockKey& key) const {
  std::optional<TsdfVoxels> out;
  store_.read(key, [&](const Block& b) { out = b.voxels; });
  return out;
}

std::vector<BlockKey> VoxelModel::visible_keys() const {
  std::lock_guard lock(visible_mu_);
  return sorted(KeySet(visible_));
}

bool VoxelModel::is_visible(const BlockKey& key) const {
  std::lock_guard lock(visible_mu_);
  return visible_.contains(key);
}

std::vector<BlockKey> VoxelModel::updated_keys() const {
  std::vector<BlockKey> out;
  std::mutex mu;
  store_.for_each([&](const BlockKey& key, const Block& b) {
    if (b.updates > 0) {
      std::lock_guard lock(mu);
      out.push_back(key);
    }
  });
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace voxstream
