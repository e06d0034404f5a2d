#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "voxstream/mc/mc_block.hpp"
#include "voxstream/mc/mesh.hpp"
#include "voxstream/mc/tables.hpp"

namespace voxstream {
namespace {

using Model = std::map<BlockKey, TsdfVoxels>;

TsdfLookup lookup_in(const Model& m) {
  return [&m](const BlockKey& k) -> std::optional<TsdfVoxels> {
    auto it = m.find(k);
    if (it == m.end()) return std::nullopt;
    return it->second;
  };
}

std::array<TsdfVoxel, 8> corners_with(float tsdf) {
  std::array<TsdfVoxel, 8> c;
  for (auto& v : c) v = {tsdf, 1.f, {}, 0};
  return c;
}

// Global-voxel reference: samples any voxel of the model, nullopt if unobserved.
std::optional<TsdfVoxel> sample(const Model& m, int gx, int gy, int gz) {
  auto it = m.find({floor_div(gx, 8), floor_div(gy, 8), floor_div(gz, 8)});
  if (it == m.end()) return std::nullopt;
  const TsdfVoxel& v = it->second[voxel_index(floor_mod(gx, 8), floor_mod(gy, 8), floor_mod(gz, 8))];
  if (v.weight <= 0.f) return std::nullopt;
  return v;
}

McBlock reference_mc(const Model& m, const BlockKey& key) {
  McBlock out;
  out.key = key;
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const int gx = key.x * 8 + x, gy = key.y * 8 + y, gz = key.z * 8 + z;
        std::uint8_t index = 0;
        bool ok = true;
        for (int k = 0; k < 8; ++k) {
          const auto v = sample(m, gx + (k & 1), gy + ((k >> 1) & 1), gz + ((k >> 2) & 1));
          if (!v) {
            ok = false;
            break;
          }
          if (v->tsdf < 0.f) index |= static_cast<std::uint8_t>(1 << k);
        }
        if (!ok || index == 0 || index == 255) continue;
        out.voxels[voxel_index(x, y, z)] = {index, sample(m, gx, gy, gz)->color};
      }
  return out;
}

TEST(McWire, SizesAndRoundTrip) {
  EXPECT_EQ(sizeof(McVoxel), 4u);
  EXPECT_EQ(kMcBlockWireBytes, 2048u);
  EXPECT_EQ(3 * kMcBlockWireBytes, kTsdfBlockWireBytes);
  McVoxels v;
  for (int i = 0; i < kVoxelsPerBlock; ++i)
    v[i] = {static_cast<std::uint8_t>(i * 7), {static_cast<std::uint8_t>(i), 2, static_cast<std::uint8_t>(i >> 1)}};
  std::vector<std::uint8_t> bytes;
  encode_mc_voxels(v, bytes);
  ASSERT_EQ(bytes.size(), 2048u);
  EXPECT_EQ(bytes[4 * 3], 21);
  EXPECT_EQ(decode_mc_voxels(bytes), v);
  bytes.push_back(0);
  EXPECT_THROW(decode_mc_voxels(bytes), std::invalid_argument);
}

TEST(McIndex, UniformCubesAndUnobservedCorners) {
  EXPECT_EQ(compute_mc_index(corners_with(0.4f)), 0);
  EXPECT_EQ(compute_mc_index(corners_with(-0.4f)), 255);
  auto c = corners_with(0.4f);
  c[0].tsdf = -0.1f;
  EXPECT_EQ(compute_mc_index(c), 1);
  EXPECT_EQ(mc_triangle_count(1), 1);
  c[5].weight = 0.f;
  EXPECT_EQ(compute_mc_index(c), 0);
  // tsdf == 0 counts as outside.
  EXPECT_EQ(compute_mc_index(corners_with(0.f)), 0);
}

TEST(McTables, BourkeIndexPermutation) {
  EXPECT_EQ(wire_to_bourke_index(0b00000100), 0b00001000);
  EXPECT_EQ(wire_to_bourke_index(0b01000000), 0b10000000);
  EXPECT_EQ(wire_to_bourke_index(0b00110011), 0b00110011);
  std::set<int> seen;
  for (int i = 0; i < 256; ++i) seen.insert(wire_to_bourke_index(static_cast<std::uint8_t>(i)));
  EXPECT_EQ(seen.size(), 256u);
}

// Every edge a triangle uses must join an inside and an outside corner, and
// the set of such edges must match the edge table.
TEST(McTables, TrianglesUseExactlyTheSignChangeEdges) {
  for (int i = 0; i < 256; ++i) {
    const auto wire = static_cast<std::uint8_t>(i);
    const auto inside = [&](int bourke_corner) {
      const auto& p = kBourkeCorners[bourke_corner];
      return ((wire >> (p[0] | p[1] << 1 | p[2] << 2)) & 1) != 0;
    };
    std::uint16_t crossing = 0;
    for (int e = 0; e < 12; ++e)
      if (inside(kBourkeEdges[e][0]) != inside(kBourkeEdges[e][1])) crossing |= static_cast<std::uint16_t>(1 << e);
    const int b = wire_to_bourke_index(wire);
    EXPECT_EQ(mc_tables::kEdgeTable[b], crossing) << i;
    std::uint16_t used = 0;
    for (int t = 0; t < 16 && mc_tables::kTriTable[b][t] >= 0; ++t) used |= static_cast<std::uint16_t>(1 << mc_tables::kTriTable[b][t]);
    EXPECT_EQ(used, crossing) << i;
    EXPECT_EQ(mc_triangle_count(wire) == 0, i == 0 || i == 255) << i;
  }
}

TEST(Cutoff, FoldsEmptyAndFullCases) {
  EXPECT_EQ(apply_cutoff({0, {10, 20, 30}}), (McVoxel{0, {0, 0, 0}}));
  EXPECT_EQ(apply_cutoff({255, {9, 9, 9}}), (McVoxel{0, {0, 0, 0}}));
  EXPECT_EQ(apply_cutoff({7, {1, 2, 3}}), (McVoxel{7, {1, 2, 3}}));
}

TEST(AffectedBlocks, OriginNeighborhood) {
  const auto a = affected_mc_blocks({0, 0, 0});
  const std::set<BlockKey> got(a.begin(), a.end());
  const std::set<BlockKey> expected = {{0, 0, 0},   {-1, 0, 0},  {0, -1, 0},  {0, 0, -1},
                                       {-1, -1, 0}, {-1, 0, -1}, {0, -1, -1}, {-1, -1, -1}};
  EXPECT_EQ(got, expected);
  EXPECT_EQ(a[0], (BlockKey{0, 0, 0}));
}

TEST(AffectedBlocks, MatchesBruteForceCornerOwnership) {
  for (const BlockKey target : {BlockKey{5, 5, 5}, BlockKey{-3, 0, 7}}) {
    std::set<BlockKey> brute;
    for (int bz = target.z - 2; bz <= target.z + 2; ++bz)
      for (int by = target.y - 2; by <= target.y + 2; ++by)
        for (int bx = target.x - 2; bx <= target.x + 2; ++bx)
          for (int v = 0; v < 512 && !brute.contains({bx, by, bz}); ++v)
            for (int k = 0; k < 8; ++k) {
              const int gx = bx * 8 + v % 8 + (k & 1), gy = by * 8 + (v / 8) % 8 + ((k >> 1) & 1),
                        gz = bz * 8 + v / 64 + ((k >> 2) & 1);
              if (BlockKey{floor_div(gx, 8), floor_div(gy, 8), floor_div(gz, 8)} == target) {
                brute.insert({bx, by, bz});
                break;
              }
            }
    const auto a = affected_mc_blocks(target);
    EXPECT_EQ(std::set<BlockKey>(a.begin(), a.end()), brute);
  }
}

TsdfVoxels plane_block(const BlockKey& key, float plane_z_voxels, Rgb color) {
  TsdfVoxels v;
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const float d = (static_cast<float>(key.z * 8 + z) - plane_z_voxels) / 12.f;
        v[voxel_index(x, y, z)] = {std::clamp(d, -1.f, 1.f), 1.f, color, 0};
      }
  return v;
}

TEST(Recompute, AbsentBlockIsAllZero) {
  const Model empty;
  const McBlock b = recompute_mc_block({1, 2, 3}, lookup_in(empty));
  EXPECT_EQ(b.key, (BlockKey{1, 2, 3}));
  for (const McVoxel& v : b.voxels) EXPECT_EQ(v, McVoxel{});
}

TEST(Recompute, PlaneLayerUsesTheStandardPlaneCase) {
  Model m;
  for (int z = -1; z <= 1; ++z)
    for (int y = -1; y <= 1; ++y)
      for (int x = -1; x <= 1; ++x) m[{x, y, z}] = plane_block({x, y, z}, 3.5f, {200, 100, 50});
  const McBlock b = recompute_mc_block({0, 0, 0}, lookup_in(m));
  EXPECT_EQ(b, reference_mc(m, {0, 0, 0}));
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const McVoxel& v = b.voxels[voxel_index(x, y, z)];
        // Corners with z = 3 lie below the plane (inside): bits 0..3.
        EXPECT_EQ(v.index, z == 3 ? 0x0f : 0) << x << "," << y << "," << z;
        if (z == 3) EXPECT_EQ(v.color, (Rgb{200, 100, 50}));
      }
  EXPECT_EQ(triangulate_block(b, 0.01f).triangles.size(), 64u * 2u);
}

TEST(Recompute, MissingPositiveNeighborZeroesBoundaryCubes) {
  Model m;
  m[{0, 0, 0}] = plane_block({0, 0, 0}, 3.5f, {1, 2, 3});
  const McBlock b = recompute_mc_block({0, 0, 0}, lookup_in(m));
  EXPECT_EQ(b, reference_mc(m, {0, 0, 0}));
  EXPECT_EQ(b.voxels[voxel_index(7, 0, 3)].index, 0);
  EXPECT_EQ(b.voxels[voxel_index(6, 6, 3)].index, 0x0f);
}

Model random_model(std::mt19937& rng, int extent) {
  std::uniform_real_distribution<float> tsdf(-1.f, 1.f);
  std::uniform_int_distribution<int> byte(0, 255), coin(0, 9);
  Model m;
  for (int z = 0; z < extent; ++z)
    for (int y = 0; y < extent; ++y)
      for (int x = 0; x < extent; ++x) {
        if (coin(rng) == 0) continue;
        TsdfVoxels v;
        for (auto& vox : v)
          vox = {tsdf(rng), coin(rng) == 0 ? 0.f : 1.f,
                 {static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng))},
                 0};
        m[{x, y, z}] = v;
      }
  return m;
}

TEST(Recompute, NeighborUpdateMatchesFullRecompute) {
  std::mt19937 rng(1234);
  for (int trial = 0; trial < 20; ++trial) {
    Model m = random_model(rng, 4);
    std::map<BlockKey, McBlock> mc;
    for (const auto& [k, _] : m) mc[k] = recompute_mc_block(k, lookup_in(m));
    std::uniform_int_distribution<int> coord(0, 3);
    const BlockKey changed{coord(rng), coord(rng), coord(rng)};
    const Model fresh = random_model(rng, 4);
    if (auto it = fresh.find(changed); it != fresh.end()) m[changed] = it->second;
    else m[changed] = plane_block(changed, 17.f, {4, 5, 6});
    for (const BlockKey& k : affected_mc_blocks(changed))
      if (m.contains(k)) mc[k] = recompute_mc_block(k, lookup_in(m));
    for (const auto& [k, _] : m) {
      const McBlock full = recompute_mc_block(k, lookup_in(m));
      ASSERT_EQ(mc.at(k), full) << "trial " << trial << " block " << k;
      ASSERT_EQ(full, reference_mc(m, k));
    }
  }
}

TEST(Triangulate, EmptyBlockHasNoTriangles) {
  McBlock b;
  EXPECT_TRUE(triangulate_block(b, 0.01f).empty());
  b.voxels[5] = {255, {1, 1, 1}};
  EXPECT_TRUE(triangulate_block(b, 0.01f).empty());
}

TEST(Triangulate, CaseOneSitsOnTheThreeEdgesAtCornerZero) {
  McBlock b;
  b.key = {1, 0, -1};
  b.voxels[voxel_index(2, 3, 4)] = {1, {9, 8, 7}};
  const float s = 0.01f;
  const TriangleMesh mesh = triangulate_block(b, s);
  ASSERT_EQ(mesh.triangles.size(), 1u);
  ASSERT_EQ(mesh.vertices.size(), 3u);
  const Eigen::Vector3f cube(10.f, 3.f, -4.f);
  std::vector<Eigen::Vector3f> expected = {(cube + Eigen::Vector3f(0.5f, 0, 0)) * s, (cube + Eigen::Vector3f(0, 0.5f, 0)) * s,
                                           (cube + Eigen::Vector3f(0, 0, 0.5f)) * s};
  for (const auto& v : mesh.vertices) {
    EXPECT_EQ(v.color, (Rgb{9, 8, 7}));
    const bool match = std::any_of(expected.begin(), expected.end(), [&](const Eigen::Vector3f& e) { return (e - v.position).norm() < 1e-6f; });
    EXPECT_TRUE(match) << v.position.transpose();
  }
}

// Reference interpolating vertex placement on the same edges.
TEST(Triangulate, MidpointsStayNearInterpolatedVertices) {
  const float s = 0.01f;
  Model m;
  const Eigen::Vector3f center(7.3f, 8.1f, 6.6f);  // voxel units
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) {
        TsdfVoxels v;
        for (int i = 0; i < 512; ++i) {
          const Eigen::Vector3f p(static_cast<float>(x * 8 + i % 8), static_cast<float>(y * 8 + (i / 8) % 8),
                                  static_cast<float>(z * 8 + i / 64));
          v[i] = {std::clamp(((p - center).norm() - 5.2f) / 6.f, -1.f, 1.f), 1.f, {}, 0};
        }
        m[{x, y, z}] = v;
      }
  std::size_t checked = 0;
  for (const auto& [k, _] : m) {
    const McBlock b = recompute_mc_block(k, lookup_in(m));
    const TriangleMesh mesh = triangulate_block(b, s);
    for (const MeshVertex& v : mesh.vertices) {
      // Recover the edge: the midpoint has exactly one half-integer coordinate.
      const Eigen::Vector3f q = v.position / s;
      Eigen::Vector3f a = q, bpt = q;
      for (int i = 0; i < 3; ++i) {
        const float frac = q[i] - std::floor(q[i]);
        if (std::abs(frac - 0.5f) < 1e-3f) {
          a[i] = std::floor(q[i]);
          bpt[i] = std::floor(q[i]) + 1.f;
        } else {
          a[i] = bpt[i] = std::round(q[i]);
        }
      }
      const auto ta = sample(m, static_cast<int>(a.x()), static_cast<int>(a.y()), static_cast<int>(a.z()));
      const auto tb = sample(m, static_cast<int>(bpt.x()), static_cast<int>(bpt.y()), static_cast<int>(bpt.z()));
      ASSERT_TRUE(ta && tb);
      ASSERT_NE(ta->tsdf < 0.f, tb->tsdf < 0.f);
      const float t = ta->tsdf / (ta->tsdf - tb->tsdf);
      const Eigen::Vector3f interp = (a + t * (bpt - a)) * s;
      EXPECT_LE((interp - v.position).norm(), s * std::sqrt(3.f) / 2.f);
      ++checked;
    }
  }
  EXPECT_GT(checked, 100u);
}

TEST(MeshBlockTest, KeyAggregation) {
  EXPECT_EQ(mesh_block_of({0, 14, 15}), (BlockKey{0, 0, 1}));
  EXPECT_EQ(mesh_block_of({-1, -15, -16}), (BlockKey{-1, -1, -2}));
}

TEST(MeshBlockTest, EmptyAndSingleVoxel) {
  const MeshBlock empty = build_mesh_block({0, 0, 0}, {}, 0.01f);
  EXPECT_TRUE(empty.mesh.empty());
  EXPECT_TRUE(empty.lod1.empty() && empty.lod2.empty() && empty.lod3.empty());

  McBlock b;
  b.key = {16, 1, 2};
  b.voxels[voxel_index(5, 6, 7)] = {3, {11, 22, 33}};
  const MeshBlock one = build_mesh_block({1, 0, 0}, {&b}, 0.01f);
  ASSERT_EQ(one.lod1.size(), 1u);
  ASSERT_EQ(one.lod2.size(), 1u);
  ASSERT_EQ(one.lod3.size(), 1u);
  EXPECT_EQ(one.lod1[0].color, (Rgb{11, 22, 33}));
  EXPECT_EQ(one.lod3[0].color, (Rgb{11, 22, 33}));
  EXPECT_TRUE(one.lod1[0].position.isApprox(Eigen::Vector3f(133.5f, 14.5f, 23.5f) * 0.01f));
  EXPECT_TRUE(one.lod2[0].position.isApprox(Eigen::Vector3f(133.f, 15.f, 23.f) * 0.01f));
  EXPECT_TRUE(one.lod3[0].position.isApprox(Eigen::Vector3f(134.f, 14.f, 22.f) * 0.01f));
  EXPECT_EQ(one.mesh.triangles.size(), static_cast<std::size_t>(mc_triangle_count(3)));
  EXPECT_THROW(build_mesh_block({0, 0, 0}, {&b}, 0.01f), std::invalid_argument);
}

TEST(MeshBlockTest, PlaneLodCountsScaleByGroupArea) {
  Model m;
  for (int z = 0; z < 3; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) m[{x, y, z}] = plane_block({x, y, z}, 9.5f, {90, 90, 90});
  std::vector<McBlock> blocks;
  for (const auto& [k, _] : m) blocks.push_back(recompute_mc_block(k, lookup_in(m)));
  std::vector<const McBlock*> ptrs;
  for (const auto& b : blocks) ptrs.push_back(&b);
  const MeshBlock mb = build_mesh_block({0, 0, 0}, ptrs, 0.01f);
  const double l1 = static_cast<double>(mb.lod1.size());
  ASSERT_GT(l1, 0.0);
  EXPECT_NEAR(static_cast<double>(mb.lod2.size()), l1 / 4.0, 0.2 * l1 / 4.0);
  EXPECT_NEAR(static_cast<double>(mb.lod3.size()), l1 / 16.0, 0.2 * l1 / 16.0);
  for (const auto& p : mb.lod2) EXPECT_EQ(p.color, (Rgb{90, 90, 90}));
}

TEST(Lod, HalfOpenBandsAndMonotonic) {
  EXPECT_EQ(choose_lod(0.f), LodLevel::kMesh);
  EXPECT_EQ(choose_lod(4.999f), LodLevel::kMesh);
  EXPECT_EQ(choose_lod(5.f), LodLevel::kLod1);
  EXPECT_EQ(choose_lod(10.f), LodLevel::kLod2);
  EXPECT_EQ(choose_lod(20.f), LodLevel::kLod3);
  EXPECT_EQ(choose_lod(1e6f), LodLevel::kLod3);
  int prev = 0;
  for (float d = 0.f; d < 30.f; d += 0.01f) {
    const int l = static_cast<int>(choose_lod(d));
    EXPECT_GE(l, prev);
    prev = l;
  }
  LodConfig bad;
  bad.lod1_max = 1.f;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace voxstream
