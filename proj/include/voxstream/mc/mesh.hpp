#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "voxstream/mc/mc_block.hpp"

namespace voxstream {

struct MeshVertex {
  Eigen::Vector3f position;
  Rgb color;
};

struct TriangleMesh {
  std::vector<MeshVertex> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }
  void append(const TriangleMesh& other);
};

/// Case-table triangles of every cube, vertices at edge midpoints (world
/// meters), colored with the cube's voxel color.
TriangleMesh triangulate_block(const McBlock& block, float voxel_size);

inline constexpr std::int32_t kMeshBlockEdge = 15;  // voxel blocks per mesh-block edge

/// Mesh block containing a voxel block.
BlockKey mesh_block_of(const BlockKey& block);

struct LodPoint {
  Eigen::Vector3f position;
  Rgb color;
};

struct MeshBlock {
  BlockKey key{};
  TriangleMesh mesh;
  std::vector<LodPoint> lod1;  // one point per surface voxel
  std::vector<LodPoint> lod2;  // per 2^3 voxel group
  std::vector<LodPoint> lod3;  // per 4^3 voxel group
};

/// Aggregates the member blocks of one mesh block. Members outside the
/// mesh block are rejected with std::invalid_argument.
MeshBlock build_mesh_block(const BlockKey& mesh_key, const std::vector<const McBlock*>& members, float voxel_size);

enum class LodLevel : std::uint8_t { kMesh = 0, kLod1 = 1, kLod2 = 2, kLod3 = 3 };

/// Half-open distance bands: [0, mesh_max) mesh, [mesh_max, lod1_max) LoD1,
/// [lod1_max, lod2_max) LoD2, beyond that LoD3.
struct LodConfig {
  float mesh_max = 5.f;
  float lod1_max = 10.f;
  float lod2_max = 20.f;
  void validate() const;
};

LodLevel choose_lod(float distance_m, const LodConfig& cfg = {});

}  // namespace voxstream
