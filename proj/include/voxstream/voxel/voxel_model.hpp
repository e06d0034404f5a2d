#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <unordered_set>
#include <vector>

#include "voxstream/common/parallel.hpp"
#include "voxstream/hash/block_store.hpp"
#include "voxstream/voxel/frame.hpp"

namespace voxstream {

using KeySet = std::unordered_set<BlockKey, BlockKeyHasher>;

/// Keys of all blocks holding a corner of any voxel cube crossed by the
/// truncation band [d - mu, d + mu] of some valid pixel ray.
std::vector<BlockKey> blocks_along_rays(const Frame& frame, const CameraIntrinsics& intrinsics,
                                        const FusionConfig& cfg);

/// Conservative test of the block's AABB against the six frustum planes,
/// each pushed outward by the frustum margin. True when the camera lies in
/// the block's AABB grown by the margin.
bool frustum_intersects_block(const Frustum& frustum, const BlockKey& key, const FusionConfig& cfg);

/// Sparse TSDF model on top of the concurrent block map.
class VoxelModel {
 public:
  struct Block {
    TsdfVoxels voxels{};
    std::uint32_t updates = 0;
  };

  struct FuseResult {
    std::vector<BlockKey> allocated;
    std::vector<BlockKey> touched;
  };

  VoxelModel(FusionConfig cfg, HashConfig hash_cfg, std::uint32_t pool_capacity = 0,
             unsigned threads = default_parallelism());

  /// Inserts missing band blocks; returns only the newly created keys.
  /// Throws std::length_error when the block map is full.
  std::vector<BlockKey> allocate_blocks(const Frame& frame, const CameraIntrinsics& intrinsics);

  /// Fuses the frame into every allocated band block; returns the keys of
  /// blocks that had at least one voxel updated. Those become visible.
  std::vector<BlockKey> integrate_frame(const Frame& frame, const CameraIntrinsics& intrinsics);

  /// allocate_blocks followed by integrate_frame with a single ray pass.
  FuseResult fuse_frame(const Frame& frame, const CameraIntrinsics& intrinsics);

  /// Visible blocks outside the frustum; they are marked retired.
  std::vector<BlockKey> retire_invisible(const Frustum& frustum);

  /// Removes blocks from the map and from visibility tracking.
  std::size_t delete_blocks(const std::vector<BlockKey>& keys);

  std::optional<TsdfVoxels> voxels(const BlockKey& key) const;
  std::optional<Block> block(const BlockKey& key) const { return store_.get(key); }
  bool contains(const BlockKey& key) const { return store_.contains(key); }
  std::size_t size() const { return store_.size(); }
  std::vector<BlockKey> keys() const { return store_.keys(); }

  std::vector<BlockKey> visible_keys() const;
  bool is_visible(const BlockKey& key) const;
  /// Keys of blocks updated at least once (visible or retired).
  std::vector<BlockKey> updated_keys() const;

  const FusionConfig& config() const { return cfg_; }
  const BlockStore<Block>& store() const { return store_; }

 private:
  std::vector<BlockKey> allocate_keys(const std::vector<BlockKey>& band);
  std::vector<BlockKey> integrate_keys(const std::vector<BlockKey>& band, const Frame& frame,
                                       const CameraIntrinsics& intrinsics);

  FusionConfig cfg_;
  unsigned threads_;
  BlockStore<Block> store_;
  mutable std::mutex visible_mu_;
  KeySet visible_;
};

}  // namespace voxstream
