#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "voxstream/block_key.hpp"

namespace voxstream {

inline constexpr int kBlockEdge = 8;
inline constexpr int kVoxelsPerBlock = kBlockEdge * kBlockEdge * kBlockEdge;
inline constexpr std::size_t kTsdfVoxelWireBytes = 12;
inline constexpr std::size_t kTsdfBlockWireBytes = kVoxelsPerBlock * kTsdfVoxelWireBytes;

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// weight == 0 means never observed; tsdf is then meaningless.
struct TsdfVoxel {
  float tsdf = 1.f;
  float weight = 0.f;
  Rgb color{};
  std::uint8_t pad = 0;
  friend bool operator==(const TsdfVoxel&, const TsdfVoxel&) = default;
};
static_assert(sizeof(TsdfVoxel) == kTsdfVoxelWireBytes);

/// Voxels in x-fastest order.
using TsdfVoxels = std::array<TsdfVoxel, kVoxelsPerBlock>;

struct TsdfBlock {
  BlockKey key{};
  TsdfVoxels voxels{};
  friend bool operator==(const TsdfBlock&, const TsdfBlock&) = default;
};

constexpr int voxel_index(int x, int y, int z) { return x + kBlockEdge * (y + kBlockEdge * z); }

/// Appends the 6144-byte wire payload (tsdf f32, weight f32, r, g, b, pad).
void encode_tsdf_voxels(const TsdfVoxels& voxels, std::vector<std::uint8_t>& out);
/// Decodes exactly kTsdfBlockWireBytes; throws std::invalid_argument on size mismatch.
TsdfVoxels decode_tsdf_voxels(std::span<const std::uint8_t> bytes);

struct FusionConfig {
  float voxel_size = 0.005f;
  float truncation = 0.060f;
  float max_weight = 128.f;
  /// Depth readings outside [min_depth, max_depth] are treated as invalid.
  float min_depth = 0.1f;
  float max_depth = 8.0f;

  float block_size() const { return voxel_size * kBlockEdge; }
  void validate() const;
};

}  // namespace voxstream
