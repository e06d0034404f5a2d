#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace voxstream {

enum class MessageType : std::uint8_t {
  kHello = 1,
  kHelloAck = 2,
  kTsdfBatch = 3,
  kMcBatch = 4,
  kBlockRequest = 5,
  kPoseUpdate = 6,
  kPoseBroadcast = 7,
  kTextureRequest = 8,
  kTextureImage = 9,
  kResetRequest = 10,
  kResetBlocks = 11,
  kDeleteBlocks = 12,
  kStats = 13,
};

const char* message_type_name(MessageType t);

enum class Codec : std::uint8_t { kIdentity = 0, kDeflate = 1, kZstd = 2 };

/// Parses "0"/"identity", "1"/"deflate", "2"/"zstd".
Codec parse_codec(const std::string& s);

enum class ProtocolErrc {
  kBadMagic,
  kBadVersion,
  kLengthMismatch,
  kCodecUnsupported,
  kDecompressFailure,
  kMalformedPayload,
  kOversize,
};

const char* protocol_errc_name(ProtocolErrc c);

/// Fatal for the connection that produced it.
class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(ProtocolErrc code, const std::string& what);
  ProtocolErrc code() const { return code_; }

 private:
  ProtocolErrc code_;
};

inline constexpr std::size_t kHeaderBytes = 16;
inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::uint32_t kMaxPayloadBytes = 512u << 20;

struct MessageHeader {
  MessageType type{};
  Codec codec = Codec::kIdentity;
  std::uint32_t compressed_len = 0;
  std::uint32_t raw_len = 0;
};

/// A decoded message: raw (decompressed) payload plus the type byte.
/// Unknown types are delivered as-is so callers can skip them.
struct Message {
  MessageType type{};
  std::vector<std::uint8_t> payload;
  /// Bytes the message occupied on the wire, header included.
  std::size_t wire_bytes = 0;
};

std::vector<std::uint8_t> compress_payload(Codec codec, std::span<const std::uint8_t> raw);
/// Throws ProtocolError (kDecompressFailure / kLengthMismatch / kCodecUnsupported).
std::vector<std::uint8_t> decompress_payload(Codec codec, std::span<const std::uint8_t> data, std::uint32_t raw_len);

/// Header + payload. The payload is compressed with `codec` unless that
/// would not make it smaller, in which case identity is used.
std::vector<std::uint8_t> encode_frame(MessageType type, std::span<const std::uint8_t> raw, Codec codec);

/// Validates magic, version, codec and lengths of a 16-byte header.
MessageHeader parse_header(std::span<const std::uint8_t, kHeaderBytes> bytes);

/// Incremental stream decoder: feed arbitrary chunks, pop whole messages.
/// After a ProtocolError the decoder is poisoned and keeps throwing.
class FrameDecoder {
 public:
  void feed(std::span<const std::uint8_t> chunk);
  std::optional<Message> next();
  std::size_t buffered() const { return buf_.size() - pos_; }

 private:
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  std::deque<Message> ready_;
  std::optional<ProtocolError> failed_;
};

/// Decodes exactly one complete frame; throws ProtocolError when the bytes
/// are not exactly one message.
Message decode_frame(std::span<const std::uint8_t> bytes);

}  // namespace voxstream
