#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "voxstream/client/reconstruction_client.hpp"
#include "voxstream/server/server.hpp"
#include "voxstream/voxel/synthetic.hpp"

namespace voxstream {
namespace {

using namespace std::chrono_literals;

TEST(EmaTest, ConstantSignalIsFixedPoint) {
  for (const double dt : {1e-4, 0.01, 0.5, 5.0, 50.0}) {
    EmaState s;
    s.value = 123.25;
    s.last_t = 10.0;
    EXPECT_NEAR(ema_update(s, 10.0 + dt, 123.25, 123.25), 123.25, 1e-9) << dt;
    EXPECT_DOUBLE_EQ(s.last_t, 10.0 + dt);
  }
}

TEST(EmaTest, UnitStepMatchesClosedForm) {
  EmaState s;
  s.tau = 5.0;
  s.value = 0.0;
  s.last_t = 0.0;
  // a = 1: u = 1/e, v = 1 - 1/e, so the result is 100 (1 - v) = 100/e.
  EXPECT_NEAR(ema_update(s, 5.0, 0.0, 100.0), 36.787944117144235, 1e-6);
}

TEST(EmaTest, TinyStepBarelyMoves) {
  EmaState s;
  s.value = 10.0;
  s.last_t = 0.0;
  const double out = ema_update(s, s.tau / 1000.0, 10.0, 510.0);
  EXPECT_LE(std::abs(out - 10.0), 1e-3 * 500.0);
  EXPECT_GT(out, 10.0);
}

TEST(EmaTest, RejectsNonIncreasingTime) {
  EmaState s;
  s.last_t = 3.0;
  EXPECT_THROW(ema_update(s, 3.0, 1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(ema_update(s, 2.0, 1.0, 1.0), std::invalid_argument);
}

TEST(EmaTest, StaysWithinInputRangeOnMonotoneSegments) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> step(0.001, 20.0), grow(0.0, 40.0);
  for (int trial = 0; trial < 200; ++trial) {
    EmaState s;
    double level = grow(rng);
    s.value = level;
    double t = 0.0;
    for (int i = 0; i < 50; ++i) {
      const double next = level + grow(rng);
      t += step(rng);
      const double lo = std::min(s.value, level), hi = std::max(s.value, next);
      const double out = ema_update(s, t, level, next);
      ASSERT_GE(out, lo - 1e-9);
      ASSERT_LE(out, hi + 1e-9);
      level = next;
    }
  }
}

std::vector<BlockKey> line_keys(int n, int y) {
  std::vector<BlockKey> out;
  for (int i = 0; i < n; ++i) out.push_back({i, y, 0});
  return out;
}

TEST(PrefetchTest, AboveThresholdQueuesNothing) {
  StreamSet stream({1u << 10, 1u << 10});
  EmaState s;
  s.value = 100.0;
  EXPECT_TRUE(maybe_prefetch(s, 100.0, line_keys(10, 0), stream).empty());
  EXPECT_TRUE(stream.empty());
}

TEST(PrefetchTest, CooldownBlocksSecondTrigger) {
  StreamSet stream({1u << 10, 1u << 10});
  EmaState s;
  s.value = 1.0;
  EXPECT_EQ(maybe_prefetch(s, 100.0, line_keys(3, 0), stream).size(), 3u);
  EXPECT_TRUE(maybe_prefetch(s, 102.0, line_keys(3, 1), stream).empty());
  EXPECT_EQ(maybe_prefetch(s, 105.0, line_keys(3, 1), stream).size(), 3u);
}

TEST(PrefetchTest, DuplicatesCollapse) {
  StreamSet stream({1u << 12, 1u << 12});
  const auto visible = line_keys(300, 0);
  for (int i = 0; i < 50; ++i) stream.insert(visible[static_cast<std::size_t>(i) * 3]);
  EmaState s;
  s.value = 0.0;
  EXPECT_EQ(maybe_prefetch(s, 10.0, visible, stream).size(), 250u);
  EXPECT_EQ(stream.size(), 300u);
}

SyntheticConfig short_room(std::uint32_t frames, float sweep) {
  SyntheticConfig sc;
  sc.scene = SyntheticSceneKind::kRoom;
  sc.frames = frames;
  sc.sweep = sweep;
  return sc;
}

FrameSource synthetic_source(const SyntheticConfig& sc) {
  auto i = std::make_shared<std::uint32_t>(0);
  return [sc, i]() -> std::optional<Frame> {
    if (*i >= sc.frames) return std::nullopt;
    return render_synthetic(sc, (*i)++);
  };
}

class RcTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ServerConfig cfg;
    cfg.hash = {1u << 16, 1u << 16};
    cfg.codec = Codec::kDeflate;
    server_ = std::make_unique<Server>(cfg);
    port_ = net_.listen(Transport::kTcp, {"127.0.0.1", 0}, [this](auto ch) { return server_->accept(ch); });
  }
  void TearDown() override { net_.shutdown(); }

  std::unique_ptr<ReconstructionClient> make_rc(const SyntheticConfig& sc, double rate = 200.0, float voxel = 0.005f) {
    RcConfig cfg;
    cfg.server = {"127.0.0.1", port_};
    cfg.hash = {1u << 16, 1u << 16};
    cfg.fusion.voxel_size = voxel;
    cfg.codec = Codec::kDeflate;
    cfg.send_rate_hz = rate;
    cfg.speed = 0.0;
    const SensorInfo sensor = synthetic_sensor(sc);
    return std::make_unique<ReconstructionClient>(cfg, sensor.intrinsics, sensor.near_m, sensor.far_m);
  }

  void expect_server_matches(const ReconstructionClient& rc) {
    const auto rk = rc.model().keys();
    const auto sk = server_->tsdf_keys();
    ASSERT_EQ(std::set<BlockKey>(rk.begin(), rk.end()), std::set<BlockKey>(sk.begin(), sk.end()));
    for (const auto& k : rk) ASSERT_EQ(rc.model().voxels(k), server_->tsdf_block(k)) << k;
  }

  NetService net_{1};
  std::unique_ptr<Server> server_;
  std::uint16_t port_ = 0;
};

TEST_F(RcTest, PackagesSplitAtPackageSize) {
  const SyntheticConfig sc = short_room(8, 0.1f);
  auto rc = make_rc(sc, 0.001);
  rc->start();
  ASSERT_TRUE([&] {
    for (int i = 0; i < 500 && !rc->connected(); ++i) std::this_thread::sleep_for(10ms);
    return rc->connected();
  }());
  for (std::uint32_t i = 0; i < sc.frames; ++i) rc->process_frame(render_synthetic(sc, i));
  rc->final_flush();
  const std::size_t total = rc->stream().size();
  ASSERT_GT(total, 1024u);
  std::vector<std::size_t> sizes;
  while (const std::size_t n = rc->pump_stream()) sizes.push_back(n);
  ASSERT_EQ(sizes.size(), (total + 511) / 512);
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) EXPECT_EQ(sizes[i], 512u);
  EXPECT_EQ(sizes.back(), total - 512 * (sizes.size() - 1));
  EXPECT_EQ(rc->pump_stream(), 0u);
  rc->stop();
}

TEST_F(RcTest, FinalFlushSkipsRetiredBlocks) {
  const SyntheticConfig sc = short_room(30, 0.8f);
  auto rc = make_rc(sc, 0.001);
  rc->start();
  ASSERT_TRUE([&] {
    for (int i = 0; i < 500 && !rc->connected(); ++i) std::this_thread::sleep_for(10ms);
    return rc->connected();
  }());
  for (std::uint32_t i = 0; i < sc.frames; ++i) rc->process_frame(render_synthetic(sc, i));
  const auto retired = rc->stream().snapshot_keys();
  ASSERT_GT(retired.size(), 0u);
  while (rc->pump_stream() > 0) {
  }
  rc->final_flush();
  const auto queued = rc->stream().snapshot_keys();
  const std::set<BlockKey> q(queued.begin(), queued.end());
  for (const auto& k : rc->model().visible_keys()) EXPECT_TRUE(q.contains(k)) << k;
  for (const auto& k : retired) {
    if (!rc->model().is_visible(k)) EXPECT_FALSE(q.contains(k)) << k;
  }
  EXPECT_LT(queued.size(), rc->model().size());
  rc->stop();
}

TEST_F(RcTest, StreamsWholeModelToServer) {
  const SyntheticConfig sc = short_room(20, 0.3f);
  auto rc = make_rc(sc);
  rc->start();
  EXPECT_EQ(rc->run(synthetic_source(sc)), 20u);
  ASSERT_TRUE(rc->wait_quiescent(60s));
  expect_server_matches(*rc);
  EXPECT_GT(rc->stats().batches_sent, 0u);
  rc->stop();
}

TEST_F(RcTest, OutageLosesNothing) {
  const SyntheticConfig sc = short_room(24, 0.4f);
  auto rc = make_rc(sc);
  rc->start();
  auto source = synthetic_source(sc);
  std::uint32_t n = 0;
  while (auto f = source()) {
    rc->process_frame(*f);
    if (++n == 8) rc->inject_outage(300ms);
    std::this_thread::sleep_for(20ms);
  }
  rc->final_flush();
  ASSERT_TRUE(rc->wait_quiescent(60s));
  expect_server_matches(*rc);
  EXPECT_GE(rc->stats().reconnects, 2u);
  rc->stop();
}

TEST_F(RcTest, ResetRequestDeletesVisibleBlocksEverywhere) {
  const SyntheticConfig sc = short_room(10, 0.2f);
  auto rc = make_rc(sc);
  rc->start();
  for (std::uint32_t i = 0; i < sc.frames; ++i) rc->process_frame(render_synthetic(sc, i));
  rc->final_flush();
  ASSERT_TRUE(rc->wait_quiescent(60s));
  const std::size_t before = server_->tsdf_size();

  auto inbox = std::make_shared<Inbox>();
  auto ec = net_.connect(Transport::kTcp, {"127.0.0.1", port_}, inbox);
  Hello hello;
  ec->send(make_frame(hello));
  ASSERT_TRUE(inbox->receive(5s).has_value());
  ec->send(make_frame(ResetRequest{}));
  std::optional<Message> del;
  while ((del = inbox->receive(5s)) && del->type != MessageType::kDeleteBlocks) {
  }
  ASSERT_TRUE(del.has_value());
  EXPECT_FALSE(parse<DeleteBlocks>(*del).keys.empty());
  ASSERT_TRUE(rc->wait_quiescent(60s));
  EXPECT_LT(server_->tsdf_size(), before);
  expect_server_matches(*rc);
  EXPECT_EQ(rc->stats().resets, 1u);

  // Re-scanning brings the region back.
  for (std::uint32_t i = 0; i < sc.frames; ++i) {
    Frame f = render_synthetic(sc, i);
    f.timestamp_us += 10'000'000;
    rc->process_frame(f);
  }
  rc->final_flush();
  ASSERT_TRUE(rc->wait_quiescent(60s));
  EXPECT_EQ(server_->tsdf_size(), before);
  expect_server_matches(*rc);
  rc->stop();
}

TEST_F(RcTest, TextureRequestsAreServedFromLatestFrame) {
  const SyntheticConfig sc = short_room(3, 0.1f);
  auto rc = make_rc(sc);
  rc->start();
  while (!rc->connected()) std::this_thread::sleep_for(5ms);
  auto inbox = std::make_shared<Inbox>();
  auto ec = net_.connect(Transport::kTcp, {"127.0.0.1", port_}, inbox);
  ec->send(make_frame(Hello{}));
  ASSERT_TRUE(inbox->receive(5s).has_value());

  const auto next_of = [&](MessageType t) {
    for (;;) {
      auto m = inbox->receive(5s);
      if (!m) throw std::runtime_error("timeout");
      if (m->type == t) return std::move(*m);
    }
  };
  ec->send(make_frame(TextureRequest{}));
  EXPECT_EQ(parse<Stats>(next_of(MessageType::kStats)).code, StatsCode::kNoFrame);

  Frame last;
  for (std::uint32_t i = 0; i < sc.frames; ++i) {
    last = render_synthetic(sc, i);
    rc->process_frame(last);
  }
  ec->send(make_frame(TextureRequest{}));
  const TextureImage a = parse<TextureImage>(next_of(MessageType::kTextureImage));
  ec->send(make_frame(TextureRequest{}));
  const TextureImage b = parse<TextureImage>(next_of(MessageType::kTextureImage));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.width, sc.width);
  EXPECT_EQ(a.height, sc.height);
  EXPECT_EQ(a.rgb, last.rgb);
  EXPECT_EQ(a.pose, last.pose);
  rc->stop();
}

TEST_F(RcTest, MismatchedVoxelSizeIsRejected) {
  const SyntheticConfig sc = short_room(1, 0.1f);
  auto rc = make_rc(sc, 100.0, 0.01f);
  rc->start();
  for (int i = 0; i < 500 && !rc->rejected(); ++i) std::this_thread::sleep_for(10ms);
  EXPECT_TRUE(rc->rejected());
  EXPECT_FALSE(rc->connected());
  rc->stop();
}

}  // namespace
}  // namespace voxstream
