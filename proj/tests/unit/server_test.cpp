#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "voxstream/net/io.hpp"
#include "voxstream/server/server.hpp"

namespace voxstream {
namespace {

using namespace std::chrono_literals;

HashConfig small_hash() { return {1u << 12, 1u << 12}; }

ServerConfig test_config() {
  ServerConfig cfg;
  cfg.hash = small_hash();
  cfg.codec = Codec::kDeflate;
  return cfg;
}

TsdfBlock random_block(const BlockKey& key, std::mt19937& rng) {
  std::uniform_real_distribution<float> d(-1.f, 1.f);
  TsdfBlock b;
  b.key = key;
  for (auto& v : b.voxels) {
    v.tsdf = d(rng);
    v.weight = 1.f + static_cast<float>(rng() % 5);
    v.color = {static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng())};
  }
  return b;
}

/// Loopback client that skips pose broadcasts unless asked for them.
class TestClient {
 public:
  TestClient(NetService& net, std::uint16_t port, ClientRole role, ClientId id = random_client_id())
      : inbox_(std::make_shared<Inbox>()), role_(role), id_(id) {
    ch_ = net.connect(Transport::kTcp, {"127.0.0.1", port}, inbox_);
  }

  HelloAck hello(float voxel_size = 0.005f) {
    Hello h;
    h.role = role_;
    h.client_id = id_;
    h.voxel_size = voxel_size;
    send(h);
    return parse<HelloAck>(expect(MessageType::kHelloAck));
  }

  template <class T>
  void send(const T& m) {
    ch_->send(make_frame(m));
  }

  Message expect(MessageType type, std::chrono::milliseconds timeout = 5s) {
    for (;;) {
      auto m = inbox_->receive(timeout);
      if (!m) throw std::runtime_error(std::string("timed out waiting for ") + message_type_name(type));
      if (m->type == type) return std::move(*m);
      if (m->type == MessageType::kPoseBroadcast) continue;
      throw std::runtime_error(std::string("expected ") + message_type_name(type) + ", got " +
                               message_type_name(m->type));
    }
  }

  std::optional<Message> poll(std::chrono::milliseconds timeout = 100ms) { return inbox_->receive(timeout); }

  McBatch request(std::uint32_t max_blocks, RequestStrategy strategy = RequestStrategy::kRandom) {
    BlockRequest r;
    r.max_blocks = max_blocks;
    r.strategy = strategy;
    send(r);
    return parse<McBatch>(expect(MessageType::kMcBatch));
  }

  void drop() { ch_->abort(); }
  bool closed(std::chrono::milliseconds timeout = 5s) {
    const auto deadline = Clock::now() + timeout;
    while (Clock::now() < deadline) {
      if (inbox_->closed()) return true;
      inbox_->receive(20ms);
    }
    return inbox_->closed();
  }
  const ClientId& id() const { return id_; }

 private:
  std::shared_ptr<Inbox> inbox_;
  std::shared_ptr<Channel> ch_;
  ClientRole role_;
  ClientId id_;
};

std::set<BlockKey> keys_of(const McBatch& b) {
  std::set<BlockKey> out;
  for (const auto& blk : b.blocks) out.insert(blk.key);
  return out;
}

class ServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_ = std::make_unique<Server>(test_config());
    port_ = net_.listen(Transport::kTcp, {"127.0.0.1", 0}, [this](auto ch) { return server_->accept(ch); });
  }
  void TearDown() override { net_.shutdown(); }

  /// Drains every pending block of an EC session.
  std::set<BlockKey> drain(TestClient& ec) {
    std::set<BlockKey> got;
    for (;;) {
      const McBatch b = ec.request(4096);
      if (b.blocks.empty()) return got;
      for (const auto& blk : b.blocks) got.insert(blk.key);
    }
  }

  void wait_for(const std::function<bool()>& cond) {
    const auto deadline = Clock::now() + 5s;
    while (!cond() && Clock::now() < deadline) std::this_thread::sleep_for(5ms);
    ASSERT_TRUE(cond());
  }

  std::mt19937 rng_{7};
  NetService net_{1};
  std::unique_ptr<Server> server_;
  std::uint16_t port_ = 0;
};

TEST_F(ServerTest, RejectsMismatchedVoxelSize) {
  TestClient ec(net_, port_, ClientRole::kExploration);
  const HelloAck ack = ec.hello(0.01f);
  EXPECT_EQ(ack.status, AckStatus::kConfigMismatch);
  EXPECT_FLOAT_EQ(ack.voxel_size, 0.005f);
  EXPECT_TRUE(ec.closed());
}

TEST_F(ServerTest, RejectsMessagesBeforeHello) {
  TestClient ec(net_, port_, ClientRole::kExploration);
  ec.send(BlockRequest{});
  EXPECT_TRUE(ec.closed());
}

TEST_F(ServerTest, FreshClientStreamSetHoldsWholeModel) {
  TsdfBatch batch;
  for (int i = 0; i < 40; ++i) batch.blocks.push_back(random_block({i % 5, i / 5, 0}, rng_));
  server_->apply_tsdf_batch(batch);
  EXPECT_EQ(server_->tsdf_size(), 40u);
  EXPECT_EQ(server_->mc_size(), 40u);

  TestClient ec(net_, port_, ClientRole::kExploration);
  const HelloAck ack = ec.hello();
  EXPECT_EQ(ack.status, AckStatus::kOk);
  EXPECT_FALSE(ack.resumed);
  EXPECT_EQ(ack.pending, 40u);
  const auto got = drain(ec);
  EXPECT_EQ(got.size(), 40u);
  EXPECT_EQ(server_->pending(ec.id()), 0u);
}

TEST_F(ServerTest, DeliveredBlocksMatchServerModel) {
  TsdfBatch batch;
  for (int i = 0; i < 30; ++i) batch.blocks.push_back(random_block({i % 3, (i / 3) % 2, i / 6}, rng_));
  server_->apply_tsdf_batch(batch);
  TestClient ec(net_, port_, ClientRole::kExploration);
  ec.hello();
  const McBatch b = ec.request(1000);
  ASSERT_EQ(b.blocks.size(), 30u);
  for (const auto& blk : b.blocks) EXPECT_EQ(server_->mc_block(blk.key), blk.voxels);
}

TEST_F(ServerTest, UpdateQueuesBlockAndNegativeNeighbors) {
  // Only blocks that hold TSDF data get MC blocks.
  TsdfBatch first;
  for (const BlockKey k : {BlockKey{0, 0, 0}, BlockKey{-1, 0, 0}, BlockKey{0, -1, -1}, BlockKey{1, 0, 0}}) {
    first.blocks.push_back(random_block(k, rng_));
  }
  server_->apply_tsdf_batch(first);
  std::vector<std::unique_ptr<TestClient>> ecs;
  for (int i = 0; i < 3; ++i) {
    ecs.push_back(std::make_unique<TestClient>(net_, port_, ClientRole::kExploration));
    ecs.back()->hello();
    drain(*ecs.back());
  }
  server_->apply_tsdf_batch(TsdfBatch{{random_block({0, 0, 0}, rng_)}});
  for (auto& ec : ecs) {
    EXPECT_EQ(server_->pending(ec->id()), 3u);  // itself, (-1,0,0), (0,-1,-1); (1,0,0) is a positive neighbor
    const auto got = keys_of(ec->request(10));
    EXPECT_EQ(got, (std::set<BlockKey>{{0, 0, 0}, {-1, 0, 0}, {0, -1, -1}}));
  }
}

TEST_F(ServerTest, RepeatedUpdateWhilePendingIsDeliveredOnce) {
  TestClient ec(net_, port_, ClientRole::kExploration);
  ec.hello();
  const TsdfBlock a = random_block({2, 2, 2}, rng_);
  server_->apply_tsdf_batch(TsdfBatch{{a}});
  const auto before = server_->pending(ec.id());
  server_->apply_tsdf_batch(TsdfBatch{{random_block({2, 2, 2}, rng_)}});
  EXPECT_EQ(server_->pending(ec.id()), before);
  const McBatch b = ec.request(10);
  ASSERT_EQ(b.blocks.size(), 1u);
  EXPECT_EQ(server_->mc_block({2, 2, 2}), b.blocks[0].voxels);
}

TEST_F(ServerTest, EmptyAndPartialRequests) {
  TestClient ec(net_, port_, ClientRole::kExploration);
  ec.hello();
  EXPECT_TRUE(ec.request(10).blocks.empty());
  TsdfBatch batch;
  for (int i = 0; i < 5; ++i) batch.blocks.push_back(random_block({10 * i, 0, 0}, rng_));
  server_->apply_tsdf_batch(batch);
  EXPECT_EQ(ec.request(10).blocks.size(), 5u);
  EXPECT_EQ(server_->pending(ec.id()), 0u);
}

TEST_F(ServerTest, RequestSizeIsCapped) {
  server_.reset();
  ServerConfig cfg = test_config();
  cfg.max_request = 7;
  server_ = std::make_unique<Server>(cfg);
  TsdfBatch batch;
  for (int i = 0; i < 20; ++i) batch.blocks.push_back(random_block({10 * i, 0, 0}, rng_));
  server_->apply_tsdf_batch(batch);
  TestClient ec(net_, port_, ClientRole::kExploration);
  ec.hello();
  EXPECT_EQ(ec.request(1000).blocks.size(), 7u);
}

TEST_F(ServerTest, GenerationOrderFollowsInsertion) {
  TestClient ec(net_, port_, ClientRole::kExploration);
  ec.hello();
  std::vector<BlockKey> order;
  for (int i = 0; i < 12; ++i) {
    const BlockKey k{10 * ((i * 7) % 12), 3, -4};
    order.push_back(k);
    server_->apply_tsdf_batch(TsdfBatch{{random_block(k, rng_)}});
  }
  std::vector<BlockKey> got;
  for (int i = 0; i < 3; ++i) {
    for (const auto& b : ec.request(4, RequestStrategy::kGenerationOrder).blocks) got.push_back(b.key);
  }
  EXPECT_EQ(got, order);
}

TEST_F(ServerTest, VisibleFirstDrainsFrustumBeforeRest) {
  TsdfBatch batch;
  std::set<BlockKey> ahead, behind;
  for (int i = 0; i < 8; ++i) {
    const BlockKey a{(i % 4) * 10 - 15, (i / 4) * 10 - 5, 20 + 10 * i};  // z up to 3.2 m in front
    const BlockKey b{(i % 4) * 10 - 15, (i / 4) * 10 - 5, -20 - 10 * i};
    ahead.insert(a);
    behind.insert(b);
    batch.blocks.push_back(random_block(a, rng_));
    batch.blocks.push_back(random_block(b, rng_));
  }
  server_->apply_tsdf_batch(batch);
  TestClient ec(net_, port_, ClientRole::kExploration);
  ec.hello();
  BlockRequest r;
  r.strategy = RequestStrategy::kVisibleFirst;
  r.pose = Pose{};
  r.intrinsics = {100.f, 100.f, 79.5f, 59.5f, 0.1f, 6.f};
  std::set<BlockKey> first, second;
  r.max_blocks = 5;
  ec.send(r);
  first = keys_of(parse<McBatch>(ec.expect(MessageType::kMcBatch)));
  EXPECT_EQ(first.size(), 5u);
  for (const auto& k : first) EXPECT_TRUE(ahead.contains(k));
  r.max_blocks = 6;
  ec.send(r);
  second = keys_of(parse<McBatch>(ec.expect(MessageType::kMcBatch)));
  // 3 visible left, then the request is topped up with 3 others.
  std::size_t visible = 0;
  for (const auto& k : second) visible += ahead.contains(k) ? 1 : 0;
  EXPECT_EQ(second.size(), 6u);
  EXPECT_EQ(visible, 3u);
}

TEST_F(ServerTest, ResumeKeepsPendingAndOutageUpdates) {
  TsdfBatch batch;
  for (int i = 0; i < 20; ++i) batch.blocks.push_back(random_block({3 * i, 0, 0}, rng_));
  server_->apply_tsdf_batch(batch);
  const ClientId id = random_client_id();
  std::set<BlockKey> received;
  {
    TestClient ec(net_, port_, ClientRole::kExploration, id);
    ec.hello();
    for (const auto& k : keys_of(ec.request(5))) received.insert(k);
    // The next response is lost with the connection.
    ec.request(5);
    ec.drop();
  }
  wait_for([&] {
    for (const auto& s : server_->sessions())
      if (s.client_id == id) return !s.connected;
    return false;
  });
  TsdfBatch outage;
  for (int i = 0; i < 50; ++i) outage.blocks.push_back(random_block({3 * i, 9, 0}, rng_));
  server_->apply_tsdf_batch(outage);

  TestClient ec(net_, port_, ClientRole::kExploration, id);
  const HelloAck ack = ec.hello();
  EXPECT_TRUE(ack.resumed);
  // Oracle: initial 20 minus the 5 confirmed, plus the 50 outage blocks.
  EXPECT_EQ(ack.pending, 65u);
  const auto rest = drain(ec);
  for (const auto& k : rest) received.insert(k);
  const auto model = server_->mc_keys();
  EXPECT_EQ(received, std::set<BlockKey>(model.begin(), model.end()));
}

TEST_F(ServerTest, ExpiredSessionIsTreatedAsFresh) {
  server_->apply_tsdf_batch(TsdfBatch{{random_block({1, 1, 1}, rng_)}});
  const ClientId id = random_client_id();
  {
    TestClient ec(net_, port_, ClientRole::kExploration, id);
    ec.hello();
    drain(ec);
    ec.drop();
  }
  wait_for([&] { return server_->sessions().size() == 1 && !server_->sessions()[0].connected; });
  EXPECT_EQ(server_->expire_sessions(Clock::now()), 0u);
  EXPECT_EQ(server_->expire_sessions(Clock::now() + 3601s), 1u);
  TestClient ec(net_, port_, ClientRole::kExploration, id);
  const HelloAck ack = ec.hello();
  EXPECT_FALSE(ack.resumed);
  EXPECT_EQ(ack.pending, 1u);
}

TEST_F(ServerTest, ResetDeletesEverywhereAndRequeuesNeighbors) {
  TsdfBatch batch;
  for (const BlockKey k : {BlockKey{0, 0, 0}, BlockKey{1, 0, 0}, BlockKey{5, 5, 5}}) batch.blocks.push_back(random_block(k, rng_));
  server_->apply_tsdf_batch(batch);
  TestClient ec(net_, port_, ClientRole::kExploration);
  ec.hello();
  drain(ec);
  server_->apply_tsdf_batch(TsdfBatch{{random_block({5, 5, 5}, rng_)}});
  EXPECT_EQ(server_->pending(ec.id()), 1u);

  TestClient rc(net_, port_, ClientRole::kReconstruction);
  rc.hello();
  rc.send(ResetBlocks{{{1, 0, 0}, {5, 5, 5}, {9, 9, 9}}});
  const DeleteBlocks del = parse<DeleteBlocks>(ec.expect(MessageType::kDeleteBlocks));
  EXPECT_EQ(std::set<BlockKey>(del.keys.begin(), del.keys.end()), (std::set<BlockKey>{{1, 0, 0}, {5, 5, 5}}));
  EXPECT_EQ(server_->mc_size(), 1u);
  EXPECT_FALSE(server_->mc_block({1, 0, 0}));
  // (0,0,0) read corners from (1,0,0) and is re-sent; (5,5,5) left the set.
  EXPECT_EQ(keys_of(ec.request(10)), (std::set<BlockKey>{{0, 0, 0}}));
  EXPECT_EQ(server_->rc_processed(rc.id()), 1u);
}

TEST_F(ServerTest, EmptyResetSendsNothing) {
  TestClient ec(net_, port_, ClientRole::kExploration);
  ec.hello();
  TestClient rc(net_, port_, ClientRole::kReconstruction);
  rc.hello();
  rc.send(ResetBlocks{{{4, 4, 4}}});
  rc.send(Stats{});
  EXPECT_EQ(parse<Stats>(rc.expect(MessageType::kStats)).pending, 1u);
  EXPECT_FALSE(ec.poll(200ms).has_value());
}

TEST_F(ServerTest, UnconfirmedDeletesAreResentOnResume) {
  TsdfBatch batch;
  for (const BlockKey k : {BlockKey{0, 0, 0}, BlockKey{4, 0, 0}}) batch.blocks.push_back(random_block(k, rng_));
  server_->apply_tsdf_batch(batch);
  const ClientId id = random_client_id();
  {
    TestClient ec(net_, port_, ClientRole::kExploration, id);
    ec.hello();
    drain(ec);
    server_->apply_reset({{4, 0, 0}});
    ec.expect(MessageType::kDeleteBlocks);
    // One request after the delete does not confirm it yet.
    ec.request(10);
    ec.drop();
  }
  wait_for([&] { return !server_->sessions()[0].connected; });
  TestClient ec(net_, port_, ClientRole::kExploration, id);
  ec.hello();
  const DeleteBlocks del = parse<DeleteBlocks>(ec.expect(MessageType::kDeleteBlocks));
  EXPECT_EQ(del.keys, (std::vector<BlockKey>{{4, 0, 0}}));
}

TEST_F(ServerTest, ConfirmedDeletesAreNotResent) {
  server_->apply_tsdf_batch(TsdfBatch{{random_block({4, 0, 0}, rng_)}});
  const ClientId id = random_client_id();
  {
    TestClient ec(net_, port_, ClientRole::kExploration, id);
    ec.hello();
    drain(ec);
    server_->apply_reset({{4, 0, 0}});
    ec.expect(MessageType::kDeleteBlocks);
    ec.request(10);
    ec.request(10);
    ec.drop();
  }
  wait_for([&] { return !server_->sessions()[0].connected; });
  TestClient ec(net_, port_, ClientRole::kExploration, id);
  ec.hello();
  EXPECT_TRUE(ec.request(10).blocks.empty());
}

TEST_F(ServerTest, DisconnectedClientGetsDeletesFirstOnResume) {
  server_->apply_tsdf_batch(TsdfBatch{{random_block({0, 0, 0}, rng_), random_block({7, 0, 0}, rng_)}});
  const ClientId id = random_client_id();
  {
    TestClient ec(net_, port_, ClientRole::kExploration, id);
    ec.hello();
    drain(ec);
    ec.request(1);
    ec.request(1);
    ec.drop();
  }
  wait_for([&] { return !server_->sessions()[0].connected; });
  server_->apply_reset({{7, 0, 0}});
  server_->apply_tsdf_batch(TsdfBatch{{random_block({7, 0, 0}, rng_)}});
  TestClient ec(net_, port_, ClientRole::kExploration, id);
  EXPECT_TRUE(ec.hello().resumed);
  EXPECT_EQ(parse<DeleteBlocks>(ec.expect(MessageType::kDeleteBlocks)).keys, (std::vector<BlockKey>{{7, 0, 0}}));
  const McBatch b = ec.request(10);
  ASSERT_EQ(b.blocks.size(), 1u);
  EXPECT_EQ(b.blocks[0].key, (BlockKey{7, 0, 0}));
}

TEST_F(ServerTest, ReconstructionProcessedCountSurvivesReconnect) {
  const ClientId id = random_client_id();
  {
    TestClient rc(net_, port_, ClientRole::kReconstruction, id);
    EXPECT_FALSE(rc.hello().resumed);
    for (int i = 0; i < 3; ++i) rc.send(TsdfBatch{{random_block({i, 0, 0}, rng_)}});
    rc.send(ResetBlocks{{{0, 0, 0}}});
    rc.send(Stats{});
    EXPECT_EQ(parse<Stats>(rc.expect(MessageType::kStats)).pending, 4u);
    rc.drop();
  }
  wait_for([&] { return !server_->sessions()[0].connected; });
  TestClient rc(net_, port_, ClientRole::kReconstruction, id);
  const HelloAck ack = rc.hello();
  EXPECT_TRUE(ack.resumed);
  EXPECT_EQ(ack.pending, 4u);
  EXPECT_EQ(server_->tsdf_size(), 2u);
}

TEST_F(ServerTest, PosesReachOtherClientsOnly) {
  TestClient rc(net_, port_, ClientRole::kReconstruction);
  TestClient a(net_, port_, ClientRole::kExploration);
  TestClient b(net_, port_, ClientRole::kExploration);
  rc.hello();
  a.hello();
  b.hello();
  const Pose pa = Pose::look_at({1.f, 0.f, 0.f}, {0.f, 0.f, 1.f});
  rc.send(PoseUpdate{Pose::look_at({0.f, 1.f, 0.f}, {0.f, 0.f, 1.f})});
  a.send(PoseUpdate{pa});
  b.send(PoseUpdate{Pose{}});
  // Round trips make sure all three updates were handled.
  rc.send(Stats{});
  rc.expect(MessageType::kStats);
  a.send(Stats{});
  a.expect(MessageType::kStats);
  b.send(Stats{});
  b.expect(MessageType::kStats);
  server_->tick_pose_broadcast(Clock::now());
  const PoseBroadcast got_b = parse<PoseBroadcast>(b.expect(MessageType::kPoseBroadcast));
  ASSERT_EQ(got_b.poses.size(), 2u);
  for (const auto& p : got_b.poses) EXPECT_NE(p.client_id, b.id());
  const auto it = std::find_if(got_b.poses.begin(), got_b.poses.end(), [&](const PeerPose& p) { return p.client_id == a.id(); });
  ASSERT_NE(it, got_b.poses.end());
  EXPECT_EQ(it->pose, pa);
  EXPECT_EQ(it->role, ClientRole::kExploration);
  EXPECT_EQ(parse<PoseBroadcast>(a.expect(MessageType::kPoseBroadcast)).poses.size(), 2u);
}

TEST_F(ServerTest, SingleClientGetsNoBroadcast) {
  TestClient a(net_, port_, ClientRole::kExploration);
  a.hello();
  a.send(PoseUpdate{Pose{}});
  a.send(Stats{});
  a.expect(MessageType::kStats);
  server_->tick_pose_broadcast(Clock::now());
  EXPECT_FALSE(a.poll(200ms).has_value());
}

TEST_F(ServerTest, PoseBroadcastRateIsLimited) {
  TestClient a(net_, port_, ClientRole::kExploration);
  TestClient b(net_, port_, ClientRole::kExploration);
  a.hello();
  b.hello();
  const auto t0 = Clock::now();
  for (int i = 0; i < 100; ++i) {
    a.send(PoseUpdate{Pose::look_at({0.01f * static_cast<float>(i), 0.f, 0.f}, {0.f, 0.f, 5.f})});
    a.send(Stats{});
    a.expect(MessageType::kStats);
    server_->tick_pose_broadcast(t0 + std::chrono::milliseconds(10 * i));
  }
  int broadcasts = 0;
  while (auto m = b.poll(200ms)) broadcasts += m->type == MessageType::kPoseBroadcast ? 1 : 0;
  EXPECT_LE(broadcasts, 20);
  EXPECT_GE(broadcasts, 19);
}

TEST_F(ServerTest, TextureWithoutReconstructionReportsError) {
  TestClient ec(net_, port_, ClientRole::kExploration);
  ec.hello();
  ec.send(TextureRequest{});
  EXPECT_EQ(parse<Stats>(ec.expect(MessageType::kStats)).code, StatsCode::kNoReconstruction);
  ec.send(ResetRequest{});
  EXPECT_EQ(parse<Stats>(ec.expect(MessageType::kStats)).code, StatsCode::kNoReconstruction);
}

TEST_F(ServerTest, ConcurrentTextureRequestsShareOneImage) {
  TestClient rc(net_, port_, ClientRole::kReconstruction);
  TestClient a(net_, port_, ClientRole::kExploration);
  TestClient b(net_, port_, ClientRole::kExploration);
  TestClient c(net_, port_, ClientRole::kExploration);
  rc.hello();
  a.hello();
  b.hello();
  c.hello();
  a.send(TextureRequest{});
  b.send(TextureRequest{});
  a.send(Stats{});
  a.expect(MessageType::kStats);
  b.send(Stats{});
  b.expect(MessageType::kStats);
  rc.expect(MessageType::kTextureRequest);
  EXPECT_FALSE(rc.poll(200ms).has_value());
  TextureImage img;
  img.width = 2;
  img.height = 1;
  img.fx = img.fy = 1.f;
  img.rgb = {1, 2, 3, 4, 5, 6};
  rc.send(img);
  EXPECT_EQ(parse<TextureImage>(a.expect(MessageType::kTextureImage)), img);
  EXPECT_EQ(parse<TextureImage>(b.expect(MessageType::kTextureImage)), img);
  EXPECT_FALSE(c.poll(200ms).has_value());
}

TEST_F(ServerTest, ResetRequestIsForwardedToReconstruction) {
  TestClient rc(net_, port_, ClientRole::kReconstruction);
  TestClient ec(net_, port_, ClientRole::kExploration);
  rc.hello();
  ec.hello();
  ec.send(ResetRequest{});
  rc.expect(MessageType::kResetRequest);
}

TEST(ServerModelTest, IncrementalMcEqualsFullRecompute) {
  ServerConfig cfg = test_config();
  Server server(cfg);
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> coord(-2, 2);
  std::map<BlockKey, TsdfVoxels> reference;
  for (int round = 0; round < 30; ++round) {
    TsdfBatch batch;
    const int n = 1 + static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) {
      TsdfBlock b = random_block({coord(rng), coord(rng), coord(rng)}, rng);
      reference[b.key] = b.voxels;
      batch.blocks.push_back(b);
    }
    server.apply_tsdf_batch(batch);
    if (round % 7 == 6) {
      const BlockKey victim = reference.begin()->first;
      reference.erase(victim);
      server.apply_reset({victim});
    }
  }
  const TsdfLookup lookup = [&](const BlockKey& k) -> std::optional<TsdfVoxels> {
    const auto it = reference.find(k);
    if (it == reference.end()) return std::nullopt;
    return it->second;
  };
  ASSERT_EQ(server.mc_size(), reference.size());
  for (const auto& [k, v] : reference) {
    const auto got = server.mc_block(k);
    ASSERT_TRUE(got.has_value());
    EXPECT_EQ(*got, recompute_mc_block(k, lookup).voxels) << k;
  }
}

}  // namespace
}  // namespace voxstream
