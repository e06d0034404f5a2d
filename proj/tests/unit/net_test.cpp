#include <gtest/gtest.h>

#include <boost/asio.hpp>
#include <random>
#include <thread>

#include "voxstream/net/io.hpp"

namespace voxstream {
namespace {

using namespace std::chrono_literals;

/// Sends every received message straight back.
class Echo : public MessageHandler {
 public:
  explicit Echo(std::shared_ptr<Channel> ch) : ch_(std::move(ch)) {}
  void on_message(Message&& m) override { ch_->send(encode_frame(m.type, m.payload, Codec::kDeflate)); }
  void on_close() override { ch_.reset(); }

 private:
  std::shared_ptr<Channel> ch_;
};

std::vector<std::uint8_t> payload_of(std::size_t n, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::vector<std::uint8_t> p(n);
  for (auto& b : p) b = static_cast<std::uint8_t>(rng() % 7);
  return p;
}

class NetTransportTest : public ::testing::TestWithParam<Transport> {};

TEST_P(NetTransportTest, EchoPreservesOrderAndBytes) {
  NetService svc(1);
  const auto port = svc.listen(GetParam(), {"127.0.0.1", 0},
                               [](std::shared_ptr<Channel> ch) { return std::make_shared<Echo>(ch); });
  auto inbox = std::make_shared<Inbox>();
  auto ch = svc.connect(GetParam(), {"127.0.0.1", port}, inbox);

  constexpr int kCount = 200;
  for (int i = 0; i < kCount; ++i) {
    const auto p = payload_of(static_cast<std::size_t>(i) * 97, static_cast<std::uint32_t>(i));
    ASSERT_TRUE(ch->send(encode_frame(MessageType::kTsdfBatch, p, Codec::kIdentity)));
  }
  for (int i = 0; i < kCount; ++i) {
    auto m = inbox->receive(5s);
    ASSERT_TRUE(m.has_value()) << i;
    EXPECT_EQ(m->type, MessageType::kTsdfBatch);
    EXPECT_EQ(m->payload, payload_of(static_cast<std::size_t>(i) * 97, static_cast<std::uint32_t>(i)));
  }
  EXPECT_GT(ch->bytes_sent(), 0u);
  EXPECT_GT(ch->bytes_received(), 0u);
  ch->close();
  EXPECT_FALSE(inbox->receive(5s).has_value());
  EXPECT_TRUE(inbox->closed());
}

TEST_P(NetTransportTest, LargeMessagesPassSmallQueueLimits) {
  NetService svc(1, ChannelLimits{1 << 16, 1 << 16});
  const auto port = svc.listen(GetParam(), {"127.0.0.1", 0},
                               [](std::shared_ptr<Channel> ch) { return std::make_shared<Echo>(ch); });
  auto inbox = std::make_shared<Inbox>();
  auto ch = svc.connect(GetParam(), {"127.0.0.1", port}, inbox);
  const auto big = payload_of(1u << 20, 42);
  for (int i = 0; i < 4; ++i) ASSERT_TRUE(ch->send(encode_frame(MessageType::kMcBatch, big, Codec::kIdentity)));
  for (int i = 0; i < 4; ++i) {
    auto m = inbox->receive(20s);
    ASSERT_TRUE(m.has_value());
    EXPECT_EQ(m->payload, big);
  }
}

TEST_P(NetTransportTest, ServerCloseFlushesThenNotifiesPeer) {
  NetService svc(1);
  const auto port = svc.listen(GetParam(), {"127.0.0.1", 0}, [](std::shared_ptr<Channel> ch) {
    const std::vector<std::uint8_t> p{1, 2, 3};
    ch->send(encode_frame(MessageType::kStats, p, Codec::kIdentity));
    ch->send(encode_frame(MessageType::kStats, p, Codec::kIdentity));
    ch->close();
    EXPECT_FALSE(ch->send(encode_frame(MessageType::kStats, p, Codec::kIdentity)));
    return std::make_shared<Inbox>();
  });
  auto inbox = std::make_shared<Inbox>();
  auto ch = svc.connect(GetParam(), {"127.0.0.1", port}, inbox);
  EXPECT_TRUE(inbox->receive(5s).has_value());
  EXPECT_TRUE(inbox->receive(5s).has_value());
  EXPECT_FALSE(inbox->receive(5s).has_value());
  EXPECT_TRUE(inbox->closed());
}

TEST_P(NetTransportTest, ShutdownClosesLiveConnections) {
  auto server_side = std::make_shared<Inbox>();
  auto client_side = std::make_shared<Inbox>();
  {
    NetService svc(1);
    const auto port = svc.listen(GetParam(), {"127.0.0.1", 0}, [&](std::shared_ptr<Channel>) { return server_side; });
    auto ch = svc.connect(GetParam(), {"127.0.0.1", port}, client_side);
    const std::vector<std::uint8_t> p{9};
    ch->send(encode_frame(MessageType::kHello, p, Codec::kIdentity));
    ASSERT_TRUE(server_side->receive(5s).has_value());
    EXPECT_EQ(svc.live_connections(), 2u);
  }
  EXPECT_TRUE(server_side->closed());
  EXPECT_TRUE(client_side->closed());
}

INSTANTIATE_TEST_SUITE_P(Transports, NetTransportTest, ::testing::Values(Transport::kTcp, Transport::kWebSocket),
                         [](const auto& info) { return info.param == Transport::kTcp ? "Tcp" : "WebSocket"; });

TEST(NetTest, CorruptStreamClosesConnection) {
  NetService svc(1);
  auto server_side = std::make_shared<Inbox>();
  const auto port = svc.listen(Transport::kTcp, {"127.0.0.1", 0}, [&](std::shared_ptr<Channel>) { return server_side; });
  boost::asio::io_context ioc;
  boost::asio::ip::tcp::socket raw(ioc);
  raw.connect({boost::asio::ip::make_address("127.0.0.1"), port});
  const std::vector<std::uint8_t> good = encode_frame(MessageType::kStats, std::vector<std::uint8_t>{}, Codec::kIdentity);
  boost::asio::write(raw, boost::asio::buffer(good));
  const std::uint8_t junk[16] = {'X', 'Y', 1, 13};
  boost::asio::write(raw, boost::asio::buffer(junk));
  EXPECT_TRUE(server_side->receive(5s).has_value());
  EXPECT_FALSE(server_side->receive(5s).has_value());
  EXPECT_TRUE(server_side->closed());
}

TEST(NetTest, WebSocketRejectsOtherPaths) {
  NetService svc(1);
  const auto port = svc.listen(Transport::kWebSocket, {"127.0.0.1", 0},
                               [](std::shared_ptr<Channel>) { return std::make_shared<Inbox>(); });
  boost::asio::io_context ioc;
  boost::asio::ip::tcp::socket raw(ioc);
  raw.connect({boost::asio::ip::make_address("127.0.0.1"), port});
  const std::string req =
      "GET /other HTTP/1.1\r\nHost: x\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
      "Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\nSec-WebSocket-Version: 13\r\n\r\n";
  boost::asio::write(raw, boost::asio::buffer(req));
  std::string reply;
  boost::system::error_code ec;
  std::array<char, 512> buf{};
  for (;;) {
    const std::size_t n = raw.read_some(boost::asio::buffer(buf), ec);
    if (ec) break;
    reply.append(buf.data(), n);
  }
  EXPECT_EQ(reply.find("101"), std::string::npos);
}

TEST(NetTest, ConnectFailureThrows) {
  NetService svc(1);
  std::uint16_t port;
  {
    boost::asio::io_context ioc;
    boost::asio::ip::tcp::acceptor a(ioc, {boost::asio::ip::make_address("127.0.0.1"), 0});
    port = a.local_endpoint().port();
  }
  EXPECT_THROW(svc.connect(Transport::kTcp, {"127.0.0.1", port}, std::make_shared<Inbox>()), std::runtime_error);
}

TEST(NetTest, ParsesEndpoints) {
  EXPECT_EQ(parse_endpoint("10.0.0.2:7801").host, "10.0.0.2");
  EXPECT_EQ(parse_endpoint("10.0.0.2:7801").port, 7801);
  EXPECT_EQ(parse_endpoint(":9000").host, "0.0.0.0");
  EXPECT_THROW(parse_endpoint("nohost"), std::invalid_argument);
  EXPECT_THROW(parse_endpoint("h:70000"), std::invalid_argument);
}

}  // namespace
}  // namespace voxstream
