#include <gtest/gtest.h>

#include <iostream>
#include <random>

#include "voxstream/wire/framing.hpp"
#include "voxstream/wire/messages.hpp"

namespace voxstream {
namespace {

constexpr Codec kCodecs[] = {Codec::kIdentity, Codec::kDeflate, Codec::kZstd};

Pose sample_pose() {
  Pose p = Pose::look_at({0.3f, 1.2f, -0.7f}, {0.f, 0.5f, 0.f});
  return p;
}

TsdfBlock sample_tsdf(int seed) {
  TsdfBlock b;
  b.key = {seed, -seed, 3 * seed};
  for (int i = 0; i < kVoxelsPerBlock; ++i) {
    b.voxels[i] = {std::sin(0.1f * static_cast<float>(i + seed)), static_cast<float>((i + seed) % 9),
                   {static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(seed), 7}, 0};
  }
  return b;
}

McBlock sample_mc(int seed) {
  McBlock b;
  b.key = {seed, 2, -seed};
  for (int i = 0; i < kVoxelsPerBlock; ++i) {
    b.voxels[i] = {static_cast<std::uint8_t>((i * 31 + seed) % 256), {static_cast<std::uint8_t>(i % 200), 1, 2}};
  }
  return b;
}

template <class T>
void expect_round_trip(const T& m) {
  for (Codec c : kCodecs) {
    const auto frame = make_frame(m, c);
    const Message decoded = decode_frame(frame);
    EXPECT_EQ(decoded.type, T::kType);
    EXPECT_EQ(decoded.wire_bytes, frame.size());
    EXPECT_EQ(parse<T>(decoded), m) << message_type_name(T::kType) << " codec " << static_cast<int>(c);
  }
}

TEST(WireHeader, HelloExampleLayout) {
  Hello h;
  h.role = ClientRole::kExploration;
  h.voxel_size = 0.005f;
  const auto frame = make_frame(h, Codec::kIdentity);
  ASSERT_EQ(frame.size(), 16u + 22u);
  EXPECT_EQ(frame[0], 'V');
  EXPECT_EQ(frame[1], 'C');
  EXPECT_EQ(frame[2], 1);
  EXPECT_EQ(frame[3], 1);
  EXPECT_EQ(frame[4], 0);
  EXPECT_EQ(frame[5] | frame[6] | frame[7], 0);
  EXPECT_EQ(frame[8], 22);
  EXPECT_EQ(frame[12], 22);
  EXPECT_EQ(frame[16], 2);      // role
  EXPECT_EQ(frame[16 + 21], 8);  // block edge
  EXPECT_EQ(parse<Hello>(decode_frame(frame)), h);
}

TEST(WireMessages, EveryTypeRoundTripsAtEveryCodec) {
  Hello hello{ClientRole::kReconstruction, random_client_id(), 0.01f, 8};
  expect_round_trip(hello);
  expect_round_trip(HelloAck{AckStatus::kConfigMismatch, true, 12345, 0.005f, 8});
  expect_round_trip(TsdfBatch{{sample_tsdf(1), sample_tsdf(2)}});
  expect_round_trip(TsdfBatch{});
  expect_round_trip(McBatch{{sample_mc(1), sample_mc(5), sample_mc(9)}});
  expect_round_trip(BlockRequest{777, RequestStrategy::kVisibleFirst, sample_pose(), {500.f, 501.f, 319.5f, 239.5f, 0.2f, 6.f}});
  expect_round_trip(PoseUpdate{sample_pose()});
  expect_round_trip(PoseBroadcast{{{random_client_id(), ClientRole::kReconstruction, sample_pose()},
                                   {random_client_id(), ClientRole::kExploration, Pose{}}}});
  expect_round_trip(TextureRequest{});
  TextureImage tex{sample_pose(), 100.f, 100.f, 3.5f, 2.5f, 8, 6, std::vector<std::uint8_t>(8 * 6 * 3, 17)};
  tex.rgb[5] = 200;
  expect_round_trip(tex);
  expect_round_trip(ResetRequest{});
  expect_round_trip(ResetBlocks{{{1, 2, 3}, {-4, 5, -6}}});
  expect_round_trip(DeleteBlocks{{{7, 8, 9}}});
  expect_round_trip(Stats{});
  expect_round_trip(Stats{StatsCode::kReport, 4, 1000, 999, "ok"});
}

TEST(WireMessages, BatchRawSizes) {
  EXPECT_EQ(serialize(McBatch{}).size(), 4u);
  EXPECT_EQ(serialize(McBatch{{sample_mc(1)}}).size(), 4u + 2060u);
  EXPECT_EQ(serialize(TsdfBatch{{sample_tsdf(1), sample_tsdf(2)}}).size(), 4u + 2u * 6156u);
  EXPECT_EQ(kMcBatchBytesPerBlock, 2060u);
  EXPECT_EQ(kTsdfBatchBytesPerBlock, 6156u);
  EXPECT_NEAR(static_cast<double>(kMcBatchBytesPerBlock) / static_cast<double>(kTsdfBatchBytesPerBlock), 0.335, 5e-4);
}

TEST(WireCodec, ConstantMcBatchCompressesBelowFivePercent) {
  McBatch batch;
  for (int i = 0; i < 512; ++i) {
    McBlock b;
    b.key = {i % 8, (i / 8) % 8, i / 64};
    b.voxels.fill({42, {10, 20, 30}});
    batch.blocks.push_back(b);
  }
  const auto raw = serialize(batch);
  const auto frame = make_frame(batch, Codec::kZstd);
  EXPECT_EQ(frame[4], static_cast<std::uint8_t>(Codec::kZstd));
  const double ratio = static_cast<double>(frame.size() - kHeaderBytes) / static_cast<double>(raw.size());
  std::cout << "512 constant MC blocks: raw " << raw.size() << " B, zstd " << frame.size() - kHeaderBytes << " B ("
            << 100.0 * ratio << "%)\n";
  ::testing::Test::RecordProperty("zstd_ratio_percent", std::to_string(100.0 * ratio));
  EXPECT_LT(ratio, 0.05);
  EXPECT_EQ(parse<McBatch>(decode_frame(frame)), batch);
}

TEST(WireCodec, IncompressiblePayloadFallsBackToIdentity) {
  std::mt19937 rng(3);
  std::vector<std::uint8_t> noise(4096);
  for (auto& b : noise) b = static_cast<std::uint8_t>(rng());
  for (Codec c : {Codec::kDeflate, Codec::kZstd}) {
    const auto frame = encode_frame(MessageType::kStats, noise, c);
    EXPECT_EQ(frame[4], 0);
    EXPECT_EQ(frame.size(), kHeaderBytes + noise.size());
  }
}

TEST(WireFraming, ByteAtATimeDeliveryParsesSequence) {
  std::vector<std::vector<std::uint8_t>> frames = {
      make_frame(Hello{}, Codec::kIdentity),
      make_frame(McBatch{{sample_mc(3)}}, Codec::kZstd),
      make_frame(TsdfBatch{{sample_tsdf(4)}}, Codec::kDeflate),
      make_frame(ResetRequest{}, Codec::kZstd),
      make_frame(DeleteBlocks{{{1, 1, 1}}}, Codec::kDeflate),
  };
  std::vector<std::uint8_t> stream;
  for (const auto& f : frames) stream.insert(stream.end(), f.begin(), f.end());
  for (std::size_t chunk : {std::size_t{1}, std::size_t{7}, std::size_t{1000}, stream.size()}) {
    FrameDecoder dec;
    std::vector<Message> out;
    for (std::size_t i = 0; i < stream.size(); i += chunk) {
      dec.feed(std::span<const std::uint8_t>(stream).subspan(i, std::min(chunk, stream.size() - i)));
      while (auto m = dec.next()) out.push_back(std::move(*m));
    }
    ASSERT_EQ(out.size(), frames.size());
    EXPECT_EQ(dec.buffered(), 0u);
    EXPECT_EQ(parse<McBatch>(out[1]), McBatch{{sample_mc(3)}});
    EXPECT_EQ(parse<TsdfBatch>(out[2]), TsdfBatch{{sample_tsdf(4)}});
    EXPECT_EQ(out[3].type, MessageType::kResetRequest);
    EXPECT_EQ(parse<DeleteBlocks>(out[4]).keys.size(), 1u);
  }
}

TEST(WireFraming, UnknownTypesAreSkippable) {
  auto unknown = encode_frame(static_cast<MessageType>(200), std::vector<std::uint8_t>(10, 1), Codec::kIdentity);
  auto known = make_frame(Stats{StatsCode::kReport, 1, 2, 3, ""});
  FrameDecoder dec;
  dec.feed(unknown);
  dec.feed(known);
  auto a = dec.next();
  auto b = dec.next();
  ASSERT_TRUE(a && b);
  EXPECT_EQ(static_cast<int>(a->type), 200);
  EXPECT_EQ(parse<Stats>(*b).mc_blocks, 3u);
}

ProtocolErrc error_of(const std::vector<std::uint8_t>& bytes) {
  try {
    FrameDecoder dec;
    dec.feed(bytes);
  } catch (const ProtocolError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ProtocolErrc::kOversize;
}

TEST(WireFraming, HeaderValidationErrors) {
  const auto good = make_frame(McBatch{{sample_mc(2)}}, Codec::kDeflate);
  auto bad = good;
  bad[0] = 'X';
  EXPECT_EQ(error_of(bad), ProtocolErrc::kBadMagic);
  bad = good;
  bad[2] = 2;
  EXPECT_EQ(error_of(bad), ProtocolErrc::kBadVersion);
  bad = good;
  bad[4] = 3;
  EXPECT_EQ(error_of(bad), ProtocolErrc::kCodecUnsupported);
  bad = good;
  bad[12] ^= 1;  // raw length off by one
  EXPECT_EQ(error_of(bad), ProtocolErrc::kLengthMismatch);
  bad = good;
  bad[kHeaderBytes + 5] ^= 0xff;
  EXPECT_EQ(error_of(bad), ProtocolErrc::kDecompressFailure);
  auto identity = make_frame(Hello{});
  identity[12] = 21;  // identity with differing lengths
  EXPECT_EQ(error_of(identity), ProtocolErrc::kLengthMismatch);
  auto lz = make_frame(McBatch{{sample_mc(2)}}, Codec::kZstd);
  lz[12] = static_cast<std::uint8_t>(lz[12] + 1);
  EXPECT_EQ(error_of(lz), ProtocolErrc::kLengthMismatch);
  auto huge = make_frame(Hello{});
  huge[11] = 0x7f;
  huge[15] = 0x7f;
  EXPECT_EQ(error_of(huge), ProtocolErrc::kOversize);
}

TEST(WireFraming, DecoderStaysFailedAfterError) {
  FrameDecoder dec;
  auto bad = make_frame(Hello{});
  bad[1] = 'D';
  EXPECT_THROW(dec.feed(bad), ProtocolError);
  EXPECT_THROW(dec.feed(make_frame(Hello{})), ProtocolError);
}

TEST(WireMessages, MalformedPayloadsAreRejected) {
  auto raw = serialize(McBatch{{sample_mc(1)}});
  raw[0] = 2;  // claims two blocks
  EXPECT_THROW(parse<McBatch>(std::span<const std::uint8_t>(raw)), ProtocolError);
  auto hello = serialize(Hello{});
  hello.push_back(0);
  EXPECT_THROW(parse<Hello>(std::span<const std::uint8_t>(hello)), ProtocolError);
  hello.resize(10);
  EXPECT_THROW(parse<Hello>(std::span<const std::uint8_t>(hello)), ProtocolError);
  auto req = serialize(BlockRequest{});
  req[0] = req[1] = req[2] = req[3] = 0;
  EXPECT_THROW(parse<BlockRequest>(std::span<const std::uint8_t>(req)), ProtocolError);
  auto tex = serialize(TextureImage{Pose{}, 1, 1, 0, 0, 2, 2, std::vector<std::uint8_t>(12)});
  tex.pop_back();
  EXPECT_THROW(parse<TextureImage>(std::span<const std::uint8_t>(tex)), ProtocolError);
  const auto stats = make_frame(Stats{});
  EXPECT_THROW(parse<Hello>(decode_frame(stats)), ProtocolError);
}

TEST(WireMessages, ClientIdsAreRandomAndHexEncoded) {
  const ClientId a = random_client_id(), b = random_client_id();
  EXPECT_NE(a, b);
  EXPECT_EQ(to_hex(a).size(), 32u);
  ClientId z{};
  z[15] = 0xab;
  EXPECT_EQ(to_hex(z), "000000000000000000000000000000ab");
  EXPECT_EQ(parse_strategy("visible"), RequestStrategy::kVisibleFirst);
  EXPECT_EQ(parse_codec("zstd"), Codec::kZstd);
  EXPECT_EQ(parse_codec("2"), Codec::kZstd);
  EXPECT_THROW(parse_codec("lzma"), std::invalid_argument);
}

}  // namespace
}  // namespace voxstream
