#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "voxstream/voxel/tsdf.hpp"

namespace voxstream {

inline constexpr std::size_t kMcVoxelWireBytes = 4;
inline constexpr std::size_t kMcBlockWireBytes = kVoxelsPerBlock * kMcVoxelWireBytes;

/// Marching Cubes case index of the cube starting at this voxel, plus the
/// voxel's color.
struct McVoxel {
  std::uint8_t index = 0;
  Rgb color{};
  friend bool operator==(const McVoxel&, const McVoxel&) = default;
};
static_assert(sizeof(McVoxel) == kMcVoxelWireBytes);

using McVoxels = std::array<McVoxel, kVoxelsPerBlock>;

struct McBlock {
  BlockKey key{};
  McVoxels voxels{};
  friend bool operator==(const McBlock&, const McBlock&) = default;
};

/// Appends the 2048-byte wire payload (index, r, g, b per voxel).
void encode_mc_voxels(const McVoxels& voxels, std::vector<std::uint8_t>& out);
/// Throws std::invalid_argument unless exactly kMcBlockWireBytes are given.
McVoxels decode_mc_voxels(std::span<const std::uint8_t> bytes);

/// Bit k set iff corner k has tsdf < 0; 0 when any corner is unobserved.
std::uint8_t compute_mc_index(const std::array<TsdfVoxel, 8>& corners);

/// Cases 0 and 255 produce no triangles and are sent as (0, black).
constexpr McVoxel apply_cutoff(McVoxel v) {
  if (v.index == 0 || v.index == 255) return {};
  return v;
}

/// The block and its seven neighbors in negative direction: exactly the MC
/// blocks whose cubes read corner voxels from `updated`.
std::array<BlockKey, 8> affected_mc_blocks(const BlockKey& updated);

using TsdfLookup = std::function<std::optional<TsdfVoxels>(const BlockKey&)>;

/// Full recompute of one MC block; cubes on the positive faces take corners
/// from the +1 neighbors. Absent blocks count as unobserved.
McBlock recompute_mc_block(const BlockKey& key, const TsdfLookup& lookup);

/// Same, with the eight source blocks already fetched: sources[d] is the
/// block at key + (d & 1, d >> 1 & 1, d >> 2 & 1), or nullptr.
McBlock recompute_mc_block(const BlockKey& key, const std::array<const TsdfVoxels*, 8>& sources);

}  // namespace voxstream
