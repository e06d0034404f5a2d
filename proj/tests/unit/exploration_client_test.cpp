#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "voxstream/client/exploration_client.hpp"
#include "voxstream/client/scenario.hpp"
#include "voxstream/server/server.hpp"

namespace voxstream {
namespace {

using namespace std::chrono_literals;

TEST(PoseScriptTest, InterpolatesBetweenWaypoints) {
  const PoseScript s({{0.0, {0, 0, 0}, {0, 0, 1}}, {2.0, {2, 0, 0}, {2, 0, 1}}});
  EXPECT_TRUE(s.at(1.0).translation.isApprox(Eigen::Vector3f(1, 0, 0)));
  EXPECT_TRUE(s.at(1.0).rotation.col(2).isApprox(Eigen::Vector3f(0, 0, 1)));
  EXPECT_TRUE(s.at(0.5).translation.isApprox(Eigen::Vector3f(0.5f, 0, 0)));
}

TEST(PoseScriptTest, HoldsEndpointsOutsideRange) {
  const PoseScript s({{1.0, {0, 1, 0}, {0, 1, 1}}, {2.0, {3, 1, 0}, {3, 1, 1}}});
  EXPECT_TRUE(s.at(-5.0).translation.isApprox(Eigen::Vector3f(0, 1, 0)));
  EXPECT_TRUE(s.at(9.0).translation.isApprox(Eigen::Vector3f(3, 1, 0)));
}

TEST(PoseScriptTest, RejectsBadWaypoints) {
  EXPECT_THROW(PoseScript({{1.0, {0, 0, 0}, {0, 0, 1}}, {1.0, {1, 0, 0}, {1, 0, 1}}}), std::invalid_argument);
  EXPECT_THROW(PoseScript({{2.0, {0, 0, 0}, {0, 0, 1}}, {1.0, {1, 0, 0}, {1, 0, 1}}}), std::invalid_argument);
  EXPECT_THROW(PoseScript({{0.0, {1, 1, 1}, {1, 1, 1}}}), std::invalid_argument);
}

TEST(PoseScriptTest, EmptyAndFixed) {
  const PoseScript empty;
  EXPECT_TRUE(empty.empty());
  EXPECT_TRUE(empty.at(3.0).translation.isZero());
  const Pose p = Pose::look_at({1, 2, 3}, {1, 2, 4});
  const PoseScript fixed = PoseScript::fixed(p);
  EXPECT_FALSE(fixed.empty());
  EXPECT_TRUE(fixed.at(100.0).translation.isApprox(p.translation));
}

TEST(PoseScriptTest, LoadsFileWithComments) {
  const auto path = std::filesystem::temp_directory_path() / "voxstream_pose_script.txt";
  {
    std::ofstream out(path);
    out << "# t ex ey ez tx ty tz\n\n0 0 0 0 0 0 1\n1.5 1 0 0 1 0 1  # second\n";
  }
  const PoseScript s = PoseScript::load(path);
  ASSERT_EQ(s.waypoints().size(), 2u);
  EXPECT_DOUBLE_EQ(s.waypoints()[1].t, 1.5);
  {
    std::ofstream out(path);
    out << "0 0 0 0 0 0\n";
  }
  EXPECT_THROW(PoseScript::load(path), std::invalid_argument);
  std::filesystem::remove(path);
  EXPECT_THROW(PoseScript::load(path), std::runtime_error);
}

McBlock surface_block(const BlockKey& key, std::uint32_t seed) {
  std::mt19937 rng(seed);
  McBlock b;
  b.key = key;
  for (auto& v : b.voxels) {
    if (rng() % 3 == 0) v = {static_cast<std::uint8_t>(1 + rng() % 254), {200, 100, static_cast<std::uint8_t>(rng())}};
  }
  return b;
}

HashConfig small_hash() { return {1u << 12, 1u << 12}; }

TEST(LocalModelTest, BlocksOfOneRegionMarkOneDirtyRegion) {
  LocalModel m(small_hash(), 0.005f);
  m.apply_batch({{surface_block({0, 0, 0}, 1), surface_block({14, 3, 7}, 2)}});
  EXPECT_EQ(m.size(), 2u);
  EXPECT_EQ(m.dirty_regions(), (std::vector<BlockKey>{{0, 0, 0}}));
  EXPECT_EQ(m.members({0, 0, 0}).size(), 2u);
  m.apply_batch({{surface_block({15, 0, 0}, 3), surface_block({-1, 0, 0}, 4)}});
  EXPECT_EQ(m.dirty_regions(), (std::vector<BlockKey>{{-1, 0, 0}, {0, 0, 0}, {1, 0, 0}}));
}

TEST(LocalModelTest, RebuildHonorsBudget) {
  LocalModel m(small_hash(), 0.005f);
  McBatch batch;
  for (int i = 0; i < 10; ++i) batch.blocks.push_back(surface_block({15 * i, 0, 0}, static_cast<std::uint32_t>(i)));
  m.apply_batch(batch);
  ASSERT_EQ(m.dirty_count(), 10u);
  EXPECT_EQ(m.rebuild_dirty(4), 4u);
  EXPECT_EQ(m.dirty_count(), 6u);
  EXPECT_EQ(m.mesh_block_count(), 4u);
  EXPECT_EQ(m.rebuild_dirty(100, 2), 6u);
  EXPECT_EQ(m.dirty_count(), 0u);
  EXPECT_EQ(m.mesh_block_count(), 10u);
  EXPECT_EQ(m.rebuild_dirty(4), 0u);
}

TEST(LocalModelTest, BuiltMeshMatchesDirectBuild) {
  LocalModel m(small_hash(), 0.01f);
  const std::vector<McBlock> blocks = {surface_block({0, 0, 0}, 5), surface_block({1, 0, 0}, 6),
                                       surface_block({2, 5, 9}, 7)};
  m.apply_batch({blocks});
  m.rebuild_dirty(1);
  const auto built = m.mesh_block({0, 0, 0});
  ASSERT_TRUE(built.has_value());
  std::vector<const McBlock*> ptrs;
  for (const auto& b : blocks) ptrs.push_back(&b);
  const MeshBlock ref = build_mesh_block({0, 0, 0}, ptrs, 0.01f);
  ASSERT_GT(ref.mesh.triangles.size(), 0u);
  ASSERT_EQ(built->mesh.triangles, ref.mesh.triangles);
  ASSERT_EQ(built->mesh.vertices.size(), ref.mesh.vertices.size());
  for (std::size_t i = 0; i < ref.mesh.vertices.size(); ++i) {
    ASSERT_EQ(built->mesh.vertices[i].position, ref.mesh.vertices[i].position);
    ASSERT_EQ(built->mesh.vertices[i].color, ref.mesh.vertices[i].color);
  }
  EXPECT_EQ(built->lod1.size(), ref.lod1.size());
  EXPECT_EQ(built->lod2.size(), ref.lod2.size());
  EXPECT_EQ(built->lod3.size(), ref.lod3.size());
}

TEST(LocalModelTest, ApplyingTwiceIsIdempotent) {
  LocalModel m(small_hash(), 0.005f);
  const McBatch batch{{surface_block({3, 3, 3}, 8), surface_block({4, 3, 3}, 9)}};
  m.apply_batch(batch);
  m.rebuild_dirty(10);
  const auto once = m.mesh_block({0, 0, 0});
  m.apply_batch(batch);
  EXPECT_EQ(m.size(), 2u);
  EXPECT_EQ(m.dirty_count(), 1u);
  m.rebuild_dirty(10);
  ASSERT_TRUE(once && m.mesh_block({0, 0, 0}));
  EXPECT_EQ(m.mesh_block({0, 0, 0})->mesh.triangles.size(), once->mesh.triangles.size());
  EXPECT_EQ(m.block({4, 3, 3}), batch.blocks[1].voxels);
}

TEST(LocalModelTest, LatestBlockWins) {
  LocalModel m(small_hash(), 0.005f);
  m.apply_batch({{surface_block({1, 2, 3}, 10)}});
  const McBlock newer = surface_block({1, 2, 3}, 11);
  m.apply_batch({{newer}});
  EXPECT_EQ(m.size(), 1u);
  EXPECT_EQ(m.block({1, 2, 3}), newer.voxels);
}

TEST(LocalModelTest, DeletesDropBlocksAndEmptyMeshes) {
  LocalModel m(small_hash(), 0.005f);
  m.apply_batch({{surface_block({0, 0, 0}, 12), surface_block({1, 0, 0}, 13), surface_block({30, 0, 0}, 14)}});
  m.rebuild_dirty(10);
  ASSERT_EQ(m.mesh_block_count(), 2u);
  EXPECT_EQ(m.apply_delete({{30, 0, 0}, {1, 0, 0}, {99, 99, 99}}), 2u);
  EXPECT_EQ(m.keys(), (std::vector<BlockKey>{{0, 0, 0}}));
  EXPECT_EQ(m.dirty_count(), 2u);
  m.rebuild_dirty(10);
  EXPECT_EQ(m.mesh_block_count(), 1u);
  EXPECT_FALSE(m.mesh_block({2, 0, 0}).has_value());
  EXPECT_EQ(m.members({0, 0, 0}), (std::vector<BlockKey>{{0, 0, 0}}));
  m.clear();
  EXPECT_EQ(m.size(), 0u);
  EXPECT_EQ(m.mesh_block_count(), 0u);
  EXPECT_EQ(m.dirty_count(), 0u);
}

TEST(CompletenessTest, EdgeCases) {
  const std::vector<BlockKey> ref = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  EXPECT_DOUBLE_EQ(completeness({}, {}), 1.0);
  EXPECT_DOUBLE_EQ(completeness({{5, 5, 5}}, {}), 1.0);
  EXPECT_DOUBLE_EQ(completeness({}, ref), 0.0);
  EXPECT_DOUBLE_EQ(completeness({{9, 9, 9}}, ref), 0.0);
  EXPECT_DOUBLE_EQ(completeness({{1, 0, 0}, {1, 0, 0}, {3, 0, 0}, {7, 0, 0}}, ref), 0.5);
  EXPECT_DOUBLE_EQ(completeness(ref, ref), 1.0);
}

TEST(RSquaredTest, MatchesHandComputedValues) {
  EXPECT_DOUBLE_EQ(r_squared_through_origin({1, 2, 4}, {3, 6, 12}), 1.0);
  // b = 17/14, residual sum 70/196, total sum about the mean 42/9.
  EXPECT_NEAR(r_squared_through_origin({1, 2, 3}, {1, 2, 4}), 0.923469387755102, 1e-12);
  // A line through the origin can fit worse than the mean.
  EXPECT_NEAR(r_squared_through_origin({1, 2, 3, 4}, {3, 1, 4, 1}), -0.8222222222222224, 1e-12);
  EXPECT_THROW(r_squared_through_origin({1}, {1}), std::invalid_argument);
  EXPECT_THROW(r_squared_through_origin({1, 2}, {1}), std::invalid_argument);
  EXPECT_THROW(r_squared_through_origin({0, 0}, {1, 2}), std::invalid_argument);
}

ScenarioSpec parse_text(const std::string& text) {
  std::istringstream in(text);
  return parse_scenario(in);
}

TEST(ScenarioParseTest, DefaultsAndOverrides) {
  const ScenarioSpec d = parse_text("");
  EXPECT_EQ(d.scene, "room");
  EXPECT_EQ(d.package_size, 512u);
  EXPECT_EQ(d.server_codec, Codec::kZstd);
  const ScenarioSpec s = parse_text(
      "[scene]\nkind = sphere\nframes = 7\n[server]\ncodec = deflate\ntransport = ws\n"
      "[ec]\ncount = 3\nstrategy = visible\ndiscard = true\njoin = after_rc\n"
      "[faults]\nec_outage_at_s = 2.5\nreset_at_frame = 4\n[run]\nname = t1\n");
  EXPECT_EQ(s.scene, "sphere");
  EXPECT_EQ(s.frames, 7u);
  EXPECT_EQ(s.server_codec, Codec::kDeflate);
  EXPECT_EQ(s.transport, Transport::kWebSocket);
  EXPECT_EQ(s.ec_count, 3u);
  EXPECT_EQ(s.ec_strategy, RequestStrategy::kVisibleFirst);
  EXPECT_TRUE(s.ec_discard);
  EXPECT_TRUE(s.ec_join_after_rc);
  EXPECT_DOUBLE_EQ(s.ec_outage_at_s, 2.5);
  EXPECT_EQ(s.reset_at_frame, 4);
  EXPECT_EQ(s.name, "t1");
}

TEST(ScenarioParseTest, RejectsUnknownAndBadInput) {
  EXPECT_THROW(parse_text("[nope]\nx = 1\n"), std::invalid_argument);
  EXPECT_THROW(parse_text("[ec]\nmax_block = 5\n"), std::invalid_argument);
  EXPECT_THROW(parse_text("[scene]\nframes = many\n"), std::invalid_argument);
  EXPECT_THROW(parse_text("[scene]\nframes = 0\n"), std::invalid_argument);
  EXPECT_THROW(parse_text("[scene]\nkind = cave\n"), std::invalid_argument);
  EXPECT_THROW(parse_text("[scene]\nkind = file\n"), std::invalid_argument);
  EXPECT_THROW(parse_text("[ec]\ndiscard = maybe\n"), std::invalid_argument);
  EXPECT_THROW(parse_text("[ec]\njoin = later\n"), std::invalid_argument);
  EXPECT_THROW(parse_text("[server]\ncodec = lzma\n"), std::invalid_argument);
  EXPECT_THROW(parse_text("[server]\ntransport = udp\n"), std::invalid_argument);
  EXPECT_THROW(parse_text("[rc]\npackage_size = 0\n"), std::invalid_argument);
  EXPECT_THROW(parse_text("[faults]\nec_outage_at_s = 1\nec_outage_s = 0\n"), std::invalid_argument);
  EXPECT_THROW(parse_text("[scene\n"), std::invalid_argument);
}

TEST(ScenarioParseTest, FileNameBecomesDefaultName) {
  const auto path = std::filesystem::temp_directory_path() / "voxstream_small.ini";
  {
    std::ofstream out(path);
    out << "[scene]\nframes = 3\n";
  }
  EXPECT_EQ(load_scenario(path).name, "voxstream_small");
  std::filesystem::remove(path);
  EXPECT_THROW(load_scenario(path), std::runtime_error);
}

TEST(ScenarioParseTest, ShippedFilesLoad) {
  std::size_t n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(VOXSTREAM_SCENARIO_DIR)) {
    if (entry.path().extension() == ".ini") {
      EXPECT_NO_THROW(load_scenario(entry.path())) << entry.path();
      ++n;
    } else if (entry.path().extension() == ".pose") {
      EXPECT_FALSE(PoseScript::load(entry.path()).empty()) << entry.path();
    }
  }
  EXPECT_GE(n, 6u);
  const ScenarioSpec faults = load_scenario(std::filesystem::path(VOXSTREAM_SCENARIO_DIR) / "room_faults.ini");
  EXPECT_EQ(faults.name, "room_faults");
  EXPECT_EQ(faults.ec_count, 2u);
  EXPECT_EQ(faults.reset_at_frame, 45);
}

TsdfBlock random_tsdf(const BlockKey& key, std::mt19937& rng) {
  std::uniform_real_distribution<float> d(-1.f, 1.f);
  TsdfBlock b;
  b.key = key;
  for (auto& v : b.voxels) {
    v.tsdf = d(rng);
    v.weight = 1.f;
    v.color = {static_cast<std::uint8_t>(rng()), 10, 20};
  }
  return b;
}

class EcTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ServerConfig cfg;
    cfg.hash = small_hash();
    cfg.codec = Codec::kDeflate;
    server_ = std::make_unique<Server>(cfg);
    port_ = net_.listen(Transport::kTcp, {"127.0.0.1", 0}, [this](auto ch) { return server_->accept(ch); });
  }
  void TearDown() override { net_.shutdown(); }

  EcConfig ec_config() const {
    EcConfig cfg;
    cfg.server = {"127.0.0.1", port_};
    cfg.hash = small_hash();
    cfg.request_rate_hz = 200.0;
    cfg.max_blocks = 16;
    return cfg;
  }

  void add_blocks(int n) {
    std::uniform_int_distribution<int> d(-12, 12);
    TsdfBatch batch;
    for (int i = 0; i < n; ++i) batch.blocks.push_back(random_tsdf({d(rng_), d(rng_), d(rng_)}, rng_));
    server_->apply_tsdf_batch(batch);
  }

  bool matches(const ExplorationClient& ec) const {
    auto sk = server_->mc_keys();
    std::sort(sk.begin(), sk.end());
    if (ec.local().keys() != sk) return false;
    for (const auto& k : sk) {
      if (ec.local().block(k) != server_->mc_block(k)) return false;
    }
    return true;
  }

  bool wait_match(const ExplorationClient& ec, std::chrono::milliseconds timeout = 30s) const {
    const auto end = Clock::now() + timeout;
    while (Clock::now() < end) {
      if (matches(ec)) return true;
      std::this_thread::sleep_for(20ms);
    }
    return matches(ec);
  }

  template <class F>
  static bool wait_for(F f, std::chrono::milliseconds timeout = 10s) {
    const auto end = Clock::now() + timeout;
    while (Clock::now() < end) {
      if (f()) return true;
      std::this_thread::sleep_for(10ms);
    }
    return f();
  }

  NetService net_{1};
  std::unique_ptr<Server> server_;
  std::uint16_t port_ = 0;
  std::mt19937 rng_{42};
};

TEST_F(EcTest, DownloadsWholeModel) {
  add_blocks(200);
  ExplorationClient ec(ec_config());
  ec.start();
  ASSERT_TRUE(wait_match(ec));
  EXPECT_TRUE(wait_for([&] { return ec.local().dirty_count() == 0; }));
  EXPECT_GT(ec.local().mesh_block_count(), 0u);
  const EcStats st = ec.stats();
  EXPECT_EQ(st.connects, 1u);
  EXPECT_EQ(st.fresh_sessions, 1u);
  EXPECT_GE(st.blocks_received, server_->mc_size());
  EXPECT_GT(st.batch_bytes, 0u);
  ec.stop();
}

TEST_F(EcTest, UpdatesAndDeletesFollowServer) {
  add_blocks(100);
  ExplorationClient ec(ec_config());
  ec.start();
  ASSERT_TRUE(wait_match(ec));
  add_blocks(50);
  ASSERT_TRUE(wait_match(ec));
  auto keys = server_->tsdf_keys();
  keys.resize(20);
  server_->apply_reset(keys);
  ASSERT_TRUE(wait_match(ec));
  EXPECT_GE(ec.stats().blocks_deleted, 20u);
  ec.stop();
}

TEST_F(EcTest, OutageLeavesModelEqualToServer) {
  add_blocks(300);
  ExplorationClient ec(ec_config());
  ec.start();
  ASSERT_TRUE(wait_for([&] { return ec.local().size() > 30; }));
  ec.inject_outage(400ms);
  add_blocks(60);
  auto keys = server_->tsdf_keys();
  keys.resize(25);
  server_->apply_reset(keys);
  ASSERT_TRUE(wait_match(ec));
  const EcStats st = ec.stats();
  EXPECT_GE(st.connects, 2u);
  EXPECT_EQ(st.fresh_sessions, 1u);
  ec.stop();
}

TEST_F(EcTest, UnknownSessionClearsLocalModel) {
  add_blocks(120);
  ExplorationClient ec(ec_config());
  ec.start();
  ASSERT_TRUE(wait_match(ec));
  ec.inject_outage(1500ms);
  ASSERT_TRUE(wait_for([&] {
    const auto s = server_->sessions();
    return s.size() == 1 && !s[0].connected;
  }));
  ASSERT_EQ(server_->expire_sessions(Clock::now() + 3601s), 1u);
  // The expired session gets no deletes, so only a cleared model can match.
  auto keys = server_->tsdf_keys();
  keys.resize(30);
  server_->apply_reset(keys);
  ASSERT_TRUE(wait_match(ec));
  EXPECT_EQ(ec.stats().fresh_sessions, 2u);
  EXPECT_EQ(ec.stats().blocks_deleted, 0u);
  ec.stop();
}

TEST_F(EcTest, DiscardModeCountsAndStopsWhenIdle) {
  add_blocks(150);
  EcConfig cfg = ec_config();
  cfg.discard = true;
  cfg.idle_stop_s = 0.3;
  ExplorationClient ec(cfg);
  ec.start();
  ASSERT_TRUE(ec.wait_finished(30s));
  EXPECT_TRUE(ec.finished());
  EXPECT_EQ(ec.local().size(), 0u);
  EXPECT_EQ(ec.stats().blocks_received, server_->mc_size());
  EXPECT_GT(ec.stats().empty_responses, 0u);
  ec.stop();
}

TEST_F(EcTest, MismatchedVoxelSizeIsRejected) {
  EcConfig cfg = ec_config();
  cfg.voxel_size = 0.01f;
  ExplorationClient ec(cfg);
  ec.start();
  EXPECT_TRUE(wait_for([&] { return ec.rejected(); }));
  EXPECT_FALSE(ec.connected());
  ec.stop();
}

TEST(ScenarioRunTest, OutageAndResetEndInExactCopies) {
  const ScenarioSpec spec = parse_text(
      "[scene]\nframes = 12\nsweep = 0.3\n[server]\ncodec = deflate\n[rc]\ncodec = deflate\n"
      "[ec]\ncount = 2\nmax_blocks = 256\n[faults]\nec_outage_at_s = 0.3\nec_outage_s = 1\nreset_at_frame = 6\n"
      "[run]\ntimeout_s = 120\nhash_buckets = 65536\n");
  const ScenarioResult r = run_scenario(spec);
  ASSERT_TRUE(r.ok) << r.diagnostics;
  EXPECT_EQ(r.frames, 12u);
  EXPECT_GT(r.server_mc_blocks, 0u);
  EXPECT_EQ(r.server_mc_blocks, r.server_tsdf_blocks);
  ASSERT_EQ(r.ecs.size(), 2u);
  for (const EcOutcome& e : r.ecs) {
    EXPECT_TRUE(e.matches_server) << e.missing << " missing, " << e.extra << " extra, " << e.differing << " differ";
    EXPECT_EQ(e.local_blocks, r.server_mc_blocks);
  }
  EXPECT_GE(r.ecs[0].stats.connects, 2u);
  EXPECT_GT(r.tsdf_mean_bps, 0.0);
  EXPECT_GT(r.mc_mean_bps, 0.0);
}

}  // namespace
}  // namespace voxstream
