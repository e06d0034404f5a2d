#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <thread>

#include "voxstream/hash/block_store.hpp"
#include "voxstream/voxel/dataset.hpp"
#include "voxstream/voxel/synthetic.hpp"
#include "voxstream/voxel/voxel_model.hpp"

namespace voxstream {
namespace {

HashConfig small_hash() { return {1u << 14, 1u << 14}; }

FusionConfig cm_config() {
  FusionConfig c;
  c.voxel_size = 0.01f;
  c.truncation = 0.06f;
  return c;
}

// A 1x1 image looking down +z whose single pixel sits on the optical axis.
CameraIntrinsics one_pixel() { return {100.f, 100.f, 0.f, 0.f, 1, 1}; }

Frame one_pixel_frame(float depth, std::uint8_t gray = 0) {
  Frame f;
  f.width = f.height = 1;
  f.depth = {depth};
  f.rgb = {gray, gray, gray};
  return f;
}

// Voxel (0,0,100) of a 1 cm grid, 1 m in front of the identity camera.
constexpr BlockKey kAxisBlock{0, 0, 12};
constexpr int kAxisVoxel = voxel_index(0, 0, 4);

TEST(TsdfWire, SizesAndRoundTrip) {
  EXPECT_EQ(sizeof(TsdfVoxel), 12u);
  EXPECT_EQ(kTsdfBlockWireBytes, 6144u);
  TsdfVoxels v;
  for (int i = 0; i < kVoxelsPerBlock; ++i) {
    v[i].tsdf = -1.f + static_cast<float>(i) / 256.f;
    v[i].weight = static_cast<float>(i % 7);
    v[i].color = {static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(i / 2), static_cast<std::uint8_t>(255 - i % 256)};
  }
  std::vector<std::uint8_t> bytes;
  encode_tsdf_voxels(v, bytes);
  ASSERT_EQ(bytes.size(), 6144u);
  EXPECT_EQ(decode_tsdf_voxels(bytes), v);
  bytes.pop_back();
  EXPECT_THROW(decode_tsdf_voxels(bytes), std::invalid_argument);
}

TEST(FusionConfigTest, RejectsThinTruncation) {
  FusionConfig c = cm_config();
  c.truncation = 0.039f;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.truncation = 0.04f;
  EXPECT_NO_THROW(c.validate());
}

TEST(Allocation, InvalidDepthAllocatesNothing) {
  VoxelModel model(cm_config(), small_hash());
  Frame f = one_pixel_frame(0.f);
  EXPECT_TRUE(model.allocate_blocks(f, one_pixel()).empty());
  EXPECT_EQ(model.size(), 0u);
}

TEST(Allocation, OpticalCenterPixelBand) {
  // Lattice range along z: ceil(94)-1 = 93 .. floor(106)+1 = 107 -> blocks 11..13.
  // The ray runs on the x = y = 0 lattice planes, so cubes on both sides
  // touch lattice points -1..1 -> blocks -1 and 0.
  VoxelModel model(cm_config(), small_hash());
  const auto keys = model.allocate_blocks(one_pixel_frame(1.f), one_pixel());
  std::vector<BlockKey> expected;
  for (int z = 11; z <= 13; ++z)
    for (int y = -1; y <= 0; ++y)
      for (int x = -1; x <= 0; ++x) expected.push_back({x, y, z});
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(keys, expected);
  EXPECT_TRUE(model.allocate_blocks(one_pixel_frame(1.f), one_pixel()).empty());
  EXPECT_EQ(model.size(), 12u);
}

TEST(Integration, SurfaceVoxelStartsAtZero) {
  VoxelModel model(cm_config(), small_hash());
  const Frame f = one_pixel_frame(1.f, 40);
  model.allocate_blocks(f, one_pixel());
  const auto touched = model.integrate_frame(f, one_pixel());
  EXPECT_NE(std::find(touched.begin(), touched.end(), kAxisBlock), touched.end());
  const TsdfVoxel v = model.voxels(kAxisBlock).value()[kAxisVoxel];
  EXPECT_NEAR(v.tsdf, 0.f, 1e-5f);
  EXPECT_EQ(v.weight, 1.f);
  EXPECT_EQ(v.color, (Rgb{40, 40, 40}));
}

TEST(Integration, WeightedAverageArithmetic) {
  VoxelModel model(cm_config(), small_hash());
  // First observation: sdf = mu -> tsdf 1, w 1. Second: sdf = mu/2.
  const Frame a = one_pixel_frame(1.06f, 10);
  const Frame b = one_pixel_frame(1.03f, 21);
  model.fuse_frame(a, one_pixel());
  model.fuse_frame(b, one_pixel());
  const TsdfVoxel v = model.voxels(kAxisBlock).value()[kAxisVoxel];
  EXPECT_NEAR(v.tsdf, 0.75f, 1e-5f);
  EXPECT_EQ(v.weight, 2.f);
  EXPECT_EQ(v.color.r, 16);  // round((10 + 21) / 2) = round(15.5)
}

TEST(Integration, FarBehindSurfaceIsIgnoredAndFrontIsClamped) {
  VoxelModel model(cm_config(), small_hash());
  model.fuse_frame(one_pixel_frame(1.f), one_pixel());
  const auto vox = model.voxels(kAxisBlock).value();
  // Voxel z = 0.97 m: sdf = +0.03 -> 0.5.
  EXPECT_NEAR(vox[voxel_index(0, 0, 1)].tsdf, 0.5f, 1e-5f);
  const auto behind = model.voxels({0, 0, 13}).value();
  // z = 1.04 -> sdf -0.04 -> -0.667; z = 1.11 -> beyond -mu, untouched.
  EXPECT_NEAR(behind[voxel_index(0, 0, 0)].tsdf, -0.04f / 0.06f, 1e-5f);
  EXPECT_EQ(behind[voxel_index(0, 0, 7)].weight, 0.f);
}

TEST(Integration, WeightIsCapped) {
  FusionConfig c = cm_config();
  c.max_weight = 3.f;
  VoxelModel model(c, small_hash());
  for (int i = 0; i < 6; ++i) model.fuse_frame(one_pixel_frame(1.f), one_pixel());
  EXPECT_EQ(model.voxels(kAxisBlock).value()[kAxisVoxel].weight, 3.f);
}

TEST(Integration, ParallelFusionMatchesSerial) {
  SyntheticConfig sc;
  sc.scene = SyntheticSceneKind::kRoom;
  sc.width = 80;
  sc.height = 60;
  sc.frames = 12;
  const SensorInfo sensor = synthetic_sensor(sc);
  VoxelModel serial(cm_config(), small_hash(), 0, 1);
  VoxelModel parallel(cm_config(), small_hash(), 0, 4);
  for (std::uint32_t i = 0; i < 4; ++i) {
    const Frame f = render_synthetic(sc, i);
    serial.fuse_frame(f, sensor.intrinsics);
    parallel.fuse_frame(f, sensor.intrinsics);
  }
  ASSERT_EQ(serial.keys().size(), parallel.keys().size());
  auto keys = serial.keys();
  std::sort(keys.begin(), keys.end());
  EXPECT_EQ(std::adjacent_find(keys.begin(), keys.end()), keys.end());
  for (const BlockKey& k : keys) ASSERT_EQ(serial.voxels(k), parallel.voxels(k)) << k;
}

TEST(Integration, FusionOrderInsensitive) {
  SyntheticConfig sc;
  sc.scene = SyntheticSceneKind::kSphere;
  sc.width = 80;
  sc.height = 60;
  sc.frames = 24;
  const SensorInfo sensor = synthetic_sensor(sc);
  std::vector<Frame> frames;
  for (std::uint32_t i = 0; i < 6; ++i) frames.push_back(render_synthetic(sc, i));
  VoxelModel fwd(cm_config(), small_hash());
  VoxelModel rev(cm_config(), small_hash());
  for (const Frame& f : frames) fwd.fuse_frame(f, sensor.intrinsics);
  for (auto it = frames.rbegin(); it != frames.rend(); ++it) rev.fuse_frame(*it, sensor.intrinsics);
  auto a = fwd.keys(), b = rev.keys();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  ASSERT_EQ(a, b);
  float worst = 0.f;
  for (const BlockKey& k : a) {
    const auto va = fwd.voxels(k).value(), vb = rev.voxels(k).value();
    for (int i = 0; i < kVoxelsPerBlock; ++i) {
      ASSERT_EQ(va[i].weight, vb[i].weight);
      if (va[i].weight > 0.f) worst = std::max(worst, std::abs(va[i].tsdf - vb[i].tsdf));
    }
  }
  EXPECT_LE(worst, 1e-4f);
}

// Zero crossings along lattice edges between observed voxels of opposite
// sign, compared against the analytic sphere.
TEST(Integration, SphereZeroCrossingMatchesAnalyticRadius) {
  SyntheticConfig sc;
  sc.scene = SyntheticSceneKind::kSphere;
  sc.frames = 36;
  const SensorInfo sensor = synthetic_sensor(sc);
  FusionConfig cfg;  // 5 mm voxels, 60 mm truncation
  VoxelModel model(cfg, small_hash());
  for (std::uint32_t i = 0; i < sc.frames; ++i) model.fuse_frame(render_synthetic(sc, i), sensor.intrinsics);

  const SphereGeometry g = synthetic_sphere();
  auto sample = [&](const Eigen::Vector3i& p) -> std::optional<float> {
    const BlockKey k{floor_div(p.x(), kBlockEdge), floor_div(p.y(), kBlockEdge), floor_div(p.z(), kBlockEdge)};
    const auto vox = model.voxels(k);
    if (!vox) return std::nullopt;
    const TsdfVoxel& v = (*vox)[voxel_index(floor_mod(p.x(), kBlockEdge), floor_mod(p.y(), kBlockEdge),
                                            floor_mod(p.z(), kBlockEdge))];
    if (v.weight <= 0.f) return std::nullopt;
    return v.tsdf;
  };
  std::size_t total = 0, good = 0;
  for (const BlockKey& k : model.keys()) {
    const auto vox = model.voxels(k).value();
    for (int z = 0; z < kBlockEdge; ++z)
      for (int y = 0; y < kBlockEdge; ++y)
        for (int x = 0; x < kBlockEdge; ++x) {
          const TsdfVoxel& v = vox[voxel_index(x, y, z)];
          if (v.weight <= 0.f) continue;
          const Eigen::Vector3i p(k.x * kBlockEdge + x, k.y * kBlockEdge + y, k.z * kBlockEdge + z);
          for (int axis = 0; axis < 3; ++axis) {
            const Eigen::Vector3i q = p + Eigen::Vector3i::Unit(axis);
            const auto t = sample(q);
            if (!t || (v.tsdf >= 0.f) == (*t >= 0.f)) continue;
            const float a = v.tsdf / (v.tsdf - *t);
            const Eigen::Vector3f zc = (p.cast<float>() + a * (q - p).cast<float>()) * cfg.voxel_size;
            ++total;
            if (std::abs((zc - g.center).norm() - g.radius) <= cfg.voxel_size) ++good;
          }
        }
  }
  ASSERT_GT(total, 10000u);
  EXPECT_GE(static_cast<double>(good), 0.99 * static_cast<double>(total)) << good << " / " << total;
}

Frustum axis_frustum(float margin) {
  Frustum f;
  f.intrinsics = {100.f, 100.f, 49.5f, 49.5f, 100, 100};
  f.near_m = 0.1f;
  f.far_m = 4.f;
  f.margin_m = margin;
  return f;
}

TEST(Frustum, ContainsCameraBlock) {
  Frustum f = axis_frustum(0.f);
  f.pose.translation = {0.33f, -0.41f, 1.2f};
  EXPECT_TRUE(frustum_intersects_block(f, {4, -6, 15}, cm_config()));
}

TEST(Frustum, FarBehindCameraIsOutside) {
  const Frustum f = axis_frustum(0.16f);
  const int z = static_cast<int>(std::floor(-2.f * f.far_m / cm_config().block_size()));
  EXPECT_FALSE(frustum_intersects_block(f, {0, 0, z}, cm_config()));
}

TEST(Frustum, LateralPlaneMargin) {
  // Left plane x >= -0.5 z with unit normal (1, 0, 0.5)/sqrt(1.25). The
  // nearest corners of blocks (kx, 0, 12) sit at x = 0.08 (kx + 1), z = 1.04:
  // signed distances -0.0358, -0.1073, -0.1789 m for kx = -8, -9, -10.
  const FusionConfig cfg = cm_config();
  const Frustum tight = axis_frustum(0.f);
  const Frustum wide = axis_frustum(0.16f);
  EXPECT_TRUE(frustum_intersects_block(tight, {-7, 0, 12}, cfg));
  EXPECT_FALSE(frustum_intersects_block(tight, {-8, 0, 12}, cfg));
  EXPECT_TRUE(frustum_intersects_block(wide, {-8, 0, 12}, cfg));
  EXPECT_TRUE(frustum_intersects_block(wide, {-9, 0, 12}, cfg));
  EXPECT_FALSE(frustum_intersects_block(wide, {-10, 0, 12}, cfg));
  Frustum at_edge = axis_frustum(0.1074f);
  EXPECT_TRUE(frustum_intersects_block(at_edge, {-9, 0, 12}, cfg));
  at_edge.margin_m = 0.1072f;
  EXPECT_FALSE(frustum_intersects_block(at_edge, {-9, 0, 12}, cfg));
}

Frustum synthetic_frustum(const SyntheticConfig& sc, const Pose& pose, float margin) {
  const SensorInfo s = synthetic_sensor(sc);
  Frustum f;
  f.pose = pose;
  f.intrinsics = s.intrinsics;
  f.near_m = s.near_m;
  f.far_m = s.far_m;
  f.margin_m = margin;
  return f;
}

TEST(Retirement, UnchangedFrustumRetiresNothingAndTurningAroundRetiresAll) {
  SyntheticConfig sc;
  sc.width = 80;
  sc.height = 60;
  sc.fov_y_deg = 40.f;
  const FusionConfig cfg = cm_config();
  VoxelModel model(cfg, small_hash());
  const Frame f = render_synthetic(sc, 0);
  const auto touched = model.fuse_frame(f, synthetic_sensor(sc).intrinsics).touched;
  ASSERT_FALSE(touched.empty());
  const Frustum here = synthetic_frustum(sc, f.pose, 2.f * cfg.block_size());
  EXPECT_TRUE(model.retire_invisible(here).empty());
  EXPECT_TRUE(model.retire_invisible(here).empty());
  Pose turned = f.pose;
  turned.rotation = f.pose.rotation * Eigen::AngleAxisf(std::numbers::pi_v<float>, Eigen::Vector3f::UnitY()).toRotationMatrix();
  const auto retired = model.retire_invisible(synthetic_frustum(sc, turned, 2.f * cfg.block_size()));
  EXPECT_EQ(retired, touched);
  EXPECT_TRUE(model.visible_keys().empty());
}

TEST(Retirement, VisibleAndRetiredCoverUpdatedBlocks) {
  SyntheticConfig sc;
  sc.width = 80;
  sc.height = 60;
  sc.frames = 24;
  const FusionConfig cfg = cm_config();
  VoxelModel model(cfg, small_hash());
  KeySet retired;
  std::size_t retire_events = 0;
  for (std::uint32_t i = 0; i < sc.frames; ++i) {
    const Frame f = render_synthetic(sc, i);
    model.fuse_frame(f, synthetic_sensor(sc).intrinsics);
    for (const BlockKey& k : model.retire_invisible(synthetic_frustum(sc, f.pose, 2.f * cfg.block_size()))) {
      EXPECT_FALSE(model.is_visible(k));
      retired.insert(k);
      ++retire_events;
    }
  }
  EXPECT_GT(retire_events, 0u);
  KeySet all(retired);
  for (const BlockKey& k : model.visible_keys()) all.insert(k);
  const auto updated = model.updated_keys();
  EXPECT_EQ(all.size(), updated.size());
  for (const BlockKey& k : updated) EXPECT_TRUE(all.contains(k)) << k;
}

TEST(Deletion, CountsAndReallocatesFresh) {
  VoxelModel model(cm_config(), small_hash());
  EXPECT_EQ(model.delete_blocks({}), 0u);
  const Frame f = one_pixel_frame(1.f);
  for (int i = 0; i < 3; ++i) model.fuse_frame(f, one_pixel());
  EXPECT_EQ(model.voxels(kAxisBlock).value()[kAxisVoxel].weight, 3.f);
  EXPECT_EQ(model.delete_blocks({kAxisBlock, {99, 99, 99}}), 1u);
  EXPECT_FALSE(model.contains(kAxisBlock));
  EXPECT_FALSE(model.is_visible(kAxisBlock));
  const auto r = model.fuse_frame(f, one_pixel());
  EXPECT_EQ(r.allocated, std::vector<BlockKey>{kAxisBlock});
  EXPECT_EQ(model.voxels(kAxisBlock).value()[kAxisVoxel].weight, 1.f);
}

TEST(Dataset, RoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "voxstream_dataset_roundtrip.vcseq";
  SyntheticConfig sc;
  sc.scene = SyntheticSceneKind::kSphere;
  sc.width = 32;
  sc.height = 24;
  sc.frames = 3;
  ASSERT_EQ(write_synthetic_sequence(sc, path), 3u);
  EXPECT_EQ(std::filesystem::file_size(path), 6u + 32u + 3u * (8u + 48u + 8u + 32u * 24u * 7u));
  SequenceReader reader(path);
  EXPECT_EQ(reader.sensor(), synthetic_sensor(sc));
  for (std::uint32_t i = 0; i < 3; ++i) {
    const auto f = reader.next();
    ASSERT_TRUE(f);
    const Frame expected = render_synthetic(sc, i);
    EXPECT_EQ(f->timestamp_us, expected.timestamp_us);
    EXPECT_EQ(f->pose, expected.pose);
    EXPECT_EQ(f->depth, expected.depth);
    EXPECT_EQ(f->rgb, expected.rgb);
  }
  EXPECT_FALSE(reader.next());
  std::filesystem::remove(path);
}

TEST(Dataset, RejectsBadMagicAndTruncation) {
  const auto path = std::filesystem::temp_directory_path() / "voxstream_dataset_bad.vcseq";
  {
    std::ofstream out(path, std::ios::binary);
    out << "VCSEQ2" << std::string(32, '\0');
  }
  EXPECT_THROW(SequenceReader{path}, DatasetError);
  SyntheticConfig sc;
  sc.width = 16;
  sc.height = 12;
  sc.frames = 1;
  write_synthetic_sequence(sc, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
  SequenceReader reader(path);
  EXPECT_THROW(reader.next(), DatasetError);
  std::filesystem::remove(path);
}

TEST(PoseTest, ArrayRoundTripAndLookAt) {
  const Pose p = Pose::look_at({1.f, 2.f, 3.f}, {0.f, 0.f, 0.f});
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(Pose::from_array(p.to_array()), p);
  const Eigen::Vector3f forward = p.to_camera({0.f, 0.f, 0.f});
  EXPECT_NEAR(forward.x(), 0.f, 1e-5f);
  EXPECT_NEAR(forward.y(), 0.f, 1e-5f);
  EXPECT_NEAR(forward.z(), std::sqrt(14.f), 1e-5f);
  Pose bad;
  bad.rotation(0, 0) = -1.f;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

struct Payload {
  int value = 0;
};

TEST(BlockStoreTest, UpsertReadEraseRecycle) {
  BlockStore<Payload> store({64, 64}, 4);
  EXPECT_TRUE(store.upsert({1, 2, 3}, [](Payload& p) { p.value = 7; }).created);
  EXPECT_FALSE(store.upsert({1, 2, 3}, [](Payload& p) { p.value += 1; }).created);
  EXPECT_EQ(store.get({1, 2, 3})->value, 8);
  EXPECT_FALSE(store.modify({9, 9, 9}, [](Payload&) {}));
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(store.put({i, 0, 0}, {i}).ok());
  EXPECT_EQ(store.put({5, 5, 5}, {}).status, HashStatus::kCapacityExhausted);
  EXPECT_TRUE(store.erase({1, 2, 3}));
  EXPECT_FALSE(store.get({1, 2, 3}));
  EXPECT_TRUE(store.put({5, 5, 5}, {55}).created);
  EXPECT_EQ(store.get({5, 5, 5})->value, 55);
  EXPECT_EQ(store.size(), 4u);
}

TEST(BlockStoreTest, ConcurrentUpsertsCreateOnceAndCountAll) {
  BlockStore<Payload> store({16, 256});
  constexpr int kThreads = 8, kPerThread = 2000;
  std::atomic<int> created{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < kThreads; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < kPerThread; ++i) {
        const auto r = store.upsert({i % 32, 0, 0}, [](Payload& p) { ++p.value; });
        if (r.created) created.fetch_add(1);
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(created.load(), 32);
  int sum = 0;
  store.for_each([&](const BlockKey&, const Payload& p) { sum += p.value; });
  EXPECT_EQ(sum, kThreads * kPerThread);
}

TEST(BlockStoreTest, ChurnNeverReturnsForeignBlock) {
  BlockStore<Payload> store({8, 64}, 16);
  std::atomic<bool> stop{false};
  std::atomic<int> mismatches{0};
  std::thread churn([&] {
    for (int i = 0; i < 20000; ++i) {
      const BlockKey k{i % 12, 1, 0};
      store.put(k, {k.x});
      store.erase(k);
    }
    stop = true;
  });
  std::thread reader([&] {
    while (!stop) {
      for (int x = 0; x < 12; ++x) {
        store.read({x, 1, 0}, [&](const Payload& p) {
          if (p.value != x) mismatches.fetch_add(1);
        });
      }
    }
  });
  churn.join();
  reader.join();
  EXPECT_EQ(mismatches.load(), 0);
}

}  // namespace
}  // namespace voxstream
