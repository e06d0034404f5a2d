#include "voxstream/mc/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "voxstream/mc/tables.hpp"

namespace voxstream {

void TriangleMesh::append(const TriangleMesh& other) {
  const auto base = static_cast<std::uint32_t>(vertices.size());
  vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
  for (const auto& t : other.triangles) triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
}

TriangleMesh triangulate_block(const McBlock& block, float voxel_size) {
  // Edge midpoints in cube units, indexed by Bourke edge.
  static const std::array<Eigen::Vector3f, 12> kMidpoints = [] {
    std::array<Eigen::Vector3f, 12> m;
    for (int e = 0; e < 12; ++e) {
      const auto& a = kBourkeCorners[kBourkeEdges[e][0]];
      const auto& b = kBourkeCorners[kBourkeEdges[e][1]];
      m[e] = Eigen::Vector3f(a[0] + b[0], a[1] + b[1], a[2] + b[2]) * 0.5f;
    }
    return m;
  }();
  TriangleMesh mesh;
  const Eigen::Vector3f origin(static_cast<float>(block.key.x * kBlockEdge), static_cast<float>(block.key.y * kBlockEdge),
                               static_cast<float>(block.key.z * kBlockEdge));
  for (int z = 0; z < kBlockEdge; ++z) {
    for (int y = 0; y < kBlockEdge; ++y) {
      for (int x = 0; x < kBlockEdge; ++x) {
        const McVoxel& v = block.voxels[voxel_index(x, y, z)];
        if (v.index == 0 || v.index == 255) continue;
        const std::int8_t* row = mc_tables::kTriTable[wire_to_bourke_index(v.index)];
        const Eigen::Vector3f cube = origin + Eigen::Vector3f(static_cast<float>(x), static_cast<float>(y), static_cast<float>(z));
        for (int t = 0; t + 2 < 16 && row[t] >= 0; t += 3) {
          const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
          for (int j = 0; j < 3; ++j) mesh.vertices.push_back({(cube + kMidpoints[row[t + j]]) * voxel_size, v.color});
          mesh.triangles.push_back({base, base + 1, base + 2});
        }
      }
    }
  }
  return mesh;
}

BlockKey mesh_block_of(const BlockKey& block) {
  return {floor_div(block.x, kMeshBlockEdge), floor_div(block.y, kMeshBlockEdge), floor_div(block.z, kMeshBlockEdge)};
}

namespace {

struct ColorSum {
  std::uint32_t r = 0, g = 0, b = 0, n = 0;
  void add(const Rgb& c) {
    r += c.r;
    g += c.g;
    b += c.b;
    ++n;
  }
  Rgb mean() const {
    auto avg = [this](std::uint32_t s) { return static_cast<std::uint8_t>((s + n / 2) / n); };
    return {avg(r), avg(g), avg(b)};
  }
};

std::vector<LodPoint> finish(std::unordered_map<BlockKey, ColorSum, BlockKeyHasher>& groups, int k, float voxel_size) {
  std::vector<std::pair<BlockKey, ColorSum>> sorted(groups.begin(), groups.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<LodPoint> out;
  out.reserve(sorted.size());
  const float half = 0.5f * static_cast<float>(k);
  for (const auto& [g, sum] : sorted) {
    const Eigen::Vector3f center(static_cast<float>(g.x * k) + half, static_cast<float>(g.y * k) + half,
                                 static_cast<float>(g.z * k) + half);
    out.push_back({center * voxel_size, sum.mean()});
  }
  return out;
}

}  // namespace

MeshBlock build_mesh_block(const BlockKey& mesh_key, const std::vector<const McBlock*>& members, float voxel_size) {
  MeshBlock out;
  out.key = mesh_key;
  std::array<std::unordered_map<BlockKey, ColorSum, BlockKeyHasher>, 3> groups;
  constexpr std::array<int, 3> kGroup = {1, 2, 4};
  for (const McBlock* block : members) {
    if (mesh_block_of(block->key) != mesh_key) throw std::invalid_argument("block outside mesh block");
    out.mesh.append(triangulate_block(*block, voxel_size));
    for (int z = 0; z < kBlockEdge; ++z)
      for (int y = 0; y < kBlockEdge; ++y)
        for (int x = 0; x < kBlockEdge; ++x) {
          const McVoxel& v = block->voxels[voxel_index(x, y, z)];
          if (v.index == 0 || v.index == 255) continue;
          const BlockKey p{block->key.x * kBlockEdge + x, block->key.y * kBlockEdge + y, block->key.z * kBlockEdge + z};
          for (int l = 0; l < 3; ++l) {
            const int k = kGroup[l];
            groups[l][{floor_div(p.x, k), floor_div(p.y, k), floor_div(p.z, k)}].add(v.color);
          }
        }
  }
  out.lod1 = finish(groups[0], 1, voxel_size);
  out.lod2 = finish(groups[1], 2, voxel_size);
  out.lod3 = finish(groups[2], 4, voxel_size);
  return out;
}

void LodConfig::validate() const {
  if (!(mesh_max >= 0.f && lod1_max >= mesh_max && lod2_max >= lod1_max)) {
    throw std::invalid_argument("LoD thresholds must be non-negative and non-decreasing");
  }
}

LodLevel choose_lod(float distance_m, const LodConfig& cfg) {
  if (distance_m < cfg.mesh_max) return LodLevel::kMesh;
  if (distance_m < cfg.lod1_max) return LodLevel::kLod1;
  if (distance_m < cfg.lod2_max) return LodLevel::kLod2;
  return LodLevel::kLod3;
}

}  // namespace voxstream
