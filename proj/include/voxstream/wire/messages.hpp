#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "voxstream/common/geometry.hpp"
#include "voxstream/mc/mc_block.hpp"
#include "voxstream/voxel/tsdf.hpp"
#include "voxstream/wire/framing.hpp"

namespace voxstream {

enum class ClientRole : std::uint8_t { kReconstruction = 1, kExploration = 2 };

using ClientId = std::array<std::uint8_t, 16>;
ClientId random_client_id();
std::string to_hex(const ClientId& id);

struct Hello {
  static constexpr MessageType kType = MessageType::kHello;
  ClientRole role = ClientRole::kExploration;
  ClientId client_id{};
  float voxel_size = 0.005f;
  std::uint8_t block_edge = kBlockEdge;
  friend bool operator==(const Hello&, const Hello&) = default;
};

enum class AckStatus : std::uint8_t { kOk = 0, kConfigMismatch = 1, kBadRole = 2 };

/// status, resumed flag, pending stream-set size, server voxel size and block edge.
struct HelloAck {
  static constexpr MessageType kType = MessageType::kHelloAck;
  AckStatus status = AckStatus::kOk;
  bool resumed = false;
  std::uint32_t pending = 0;
  float voxel_size = 0.f;
  std::uint8_t block_edge = kBlockEdge;
  friend bool operator==(const HelloAck&, const HelloAck&) = default;
};

struct TsdfBatch {
  static constexpr MessageType kType = MessageType::kTsdfBatch;
  std::vector<TsdfBlock> blocks;
  friend bool operator==(const TsdfBatch&, const TsdfBatch&) = default;
};

struct McBatch {
  static constexpr MessageType kType = MessageType::kMcBatch;
  std::vector<McBlock> blocks;
  friend bool operator==(const McBatch&, const McBatch&) = default;
};

inline constexpr std::size_t kTsdfBatchBytesPerBlock = 12 + kTsdfBlockWireBytes;  // 6156
inline constexpr std::size_t kMcBatchBytesPerBlock = 12 + kMcBlockWireBytes;      // 2060

enum class RequestStrategy : std::uint8_t { kGenerationOrder = 0, kVisibleFirst = 1, kRandom = 2 };

/// Parses "order", "visible", "random" (or 0/1/2).
RequestStrategy parse_strategy(const std::string& s);
const char* strategy_name(RequestStrategy s);

struct RequestIntrinsics {
  float fx = 0.f, fy = 0.f, cx = 0.f, cy = 0.f, near_m = 0.1f, far_m = 8.f;
  friend bool operator==(const RequestIntrinsics&, const RequestIntrinsics&) = default;
};

struct BlockRequest {
  static constexpr MessageType kType = MessageType::kBlockRequest;
  std::uint32_t max_blocks = 512;
  RequestStrategy strategy = RequestStrategy::kRandom;
  Pose pose;
  RequestIntrinsics intrinsics;
  friend bool operator==(const BlockRequest&, const BlockRequest&) = default;
};

struct PoseUpdate {
  static constexpr MessageType kType = MessageType::kPoseUpdate;
  Pose pose;
  friend bool operator==(const PoseUpdate&, const PoseUpdate&) = default;
};

struct PeerPose {
  ClientId client_id{};
  ClientRole role = ClientRole::kExploration;
  Pose pose;
  friend bool operator==(const PeerPose&, const PeerPose&) = default;
};

struct PoseBroadcast {
  static constexpr MessageType kType = MessageType::kPoseBroadcast;
  std::vector<PeerPose> poses;
  friend bool operator==(const PoseBroadcast&, const PoseBroadcast&) = default;
};

struct TextureRequest {
  static constexpr MessageType kType = MessageType::kTextureRequest;
  friend bool operator==(const TextureRequest&, const TextureRequest&) = default;
};

struct TextureImage {
  static constexpr MessageType kType = MessageType::kTextureImage;
  Pose pose;
  float fx = 0.f, fy = 0.f, cx = 0.f, cy = 0.f;
  std::uint32_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;
  friend bool operator==(const TextureImage&, const TextureImage&) = default;
};

struct ResetRequest {
  static constexpr MessageType kType = MessageType::kResetRequest;
  friend bool operator==(const ResetRequest&, const ResetRequest&) = default;
};

struct ResetBlocks {
  static constexpr MessageType kType = MessageType::kResetBlocks;
  std::vector<BlockKey> keys;
  friend bool operator==(const ResetBlocks&, const ResetBlocks&) = default;
};

struct DeleteBlocks {
  static constexpr MessageType kType = MessageType::kDeleteBlocks;
  std::vector<BlockKey> keys;
  friend bool operator==(const DeleteBlocks&, const DeleteBlocks&) = default;
};

enum class StatsCode : std::uint16_t {
  kQuery = 0,          // empty payload: a client asking for a report
  kReport = 1,         // model sizes
  kNoReconstruction = 2,
  kNoFrame = 3,
  kError = 4,
};

/// code u16, pending u32, tsdf_blocks u64, mc_blocks u64, text (u16 length + bytes).
/// An empty payload decodes as kQuery.
struct Stats {
  static constexpr MessageType kType = MessageType::kStats;
  StatsCode code = StatsCode::kQuery;
  std::uint32_t pending = 0;
  std::uint64_t tsdf_blocks = 0;
  std::uint64_t mc_blocks = 0;
  std::string text;
  friend bool operator==(const Stats&, const Stats&) = default;
};

std::vector<std::uint8_t> serialize(const Hello& m);
std::vector<std::uint8_t> serialize(const HelloAck& m);
std::vector<std::uint8_t> serialize(const TsdfBatch& m);
std::vector<std::uint8_t> serialize(const McBatch& m);
std::vector<std::uint8_t> serialize(const BlockRequest& m);
std::vector<std::uint8_t> serialize(const PoseUpdate& m);
std::vector<std::uint8_t> serialize(const PoseBroadcast& m);
std::vector<std::uint8_t> serialize(const TextureRequest& m);
std::vector<std::uint8_t> serialize(const TextureImage& m);
std::vector<std::uint8_t> serialize(const ResetRequest& m);
std::vector<std::uint8_t> serialize(const ResetBlocks& m);
std::vector<std::uint8_t> serialize(const DeleteBlocks& m);
std::vector<std::uint8_t> serialize(const Stats& m);

/// Decodes a raw payload; throws ProtocolError(kMalformedPayload) on short,
/// long or inconsistent input.
template <class T>
T parse(std::span<const std::uint8_t> payload);

template <>
Hello parse<Hello>(std::span<const std::uint8_t> payload);
template <>
HelloAck parse<HelloAck>(std::span<const std::uint8_t> payload);
template <>
TsdfBatch parse<TsdfBatch>(std::span<const std::uint8_t> payload);
template <>
McBatch parse<McBatch>(std::span<const std::uint8_t> payload);
template <>
BlockRequest parse<BlockRequest>(std::span<const std::uint8_t> payload);
template <>
PoseUpdate parse<PoseUpdate>(std::span<const std::uint8_t> payload);
template <>
PoseBroadcast parse<PoseBroadcast>(std::span<const std::uint8_t> payload);
template <>
TextureRequest parse<TextureRequest>(std::span<const std::uint8_t> payload);
template <>
TextureImage parse<TextureImage>(std::span<const std::uint8_t> payload);
template <>
ResetRequest parse<ResetRequest>(std::span<const std::uint8_t> payload);
template <>
ResetBlocks parse<ResetBlocks>(std::span<const std::uint8_t> payload);
template <>
DeleteBlocks parse<DeleteBlocks>(std::span<const std::uint8_t> payload);
template <>
Stats parse<Stats>(std::span<const std::uint8_t> payload);

/// Typed decode of a Message; throws ProtocolError when the type differs.
template <class T>
T parse(const Message& m) {
  if (m.type != T::kType) {
    throw ProtocolError(ProtocolErrc::kMalformedPayload, std::string("expected ") + message_type_name(T::kType));
  }
  return parse<T>(std::span<const std::uint8_t>(m.payload));
}

template <class T>
std::vector<std::uint8_t> make_frame(const T& m, Codec codec = Codec::kIdentity) {
  return encode_frame(T::kType, serialize(m), codec);
}

/// Serializes a TSDF_BATCH straight from voxel arrays without copying them
/// into TsdfBlock values first.
void append_tsdf_batch_header(std::uint32_t count, std::vector<std::uint8_t>& out);
void append_tsdf_batch_entry(const BlockKey& key, const TsdfVoxels& voxels, std::vector<std::uint8_t>& out);
void append_mc_batch_entry(const BlockKey& key, const McVoxels& voxels, std::vector<std::uint8_t>& out);

}  // namespace voxstream
