#include "voxstream/wire/framing.hpp"

#include <zlib.h>
#include <zstd.h>
#include <zstd_errors.h>

#include <cstring>
#include <memory>

#include "voxstream/common/bytes.hpp"

namespace voxstream {

const char* message_type_name(MessageType t) {
  switch (t) {
    case MessageType::kHello: return "HELLO";
    case MessageType::kHelloAck: return "HELLO_ACK";
    case MessageType::kTsdfBatch: return "TSDF_BATCH";
    case MessageType::kMcBatch: return "MC_BATCH";
    case MessageType::kBlockRequest: return "BLOCK_REQUEST";
    case MessageType::kPoseUpdate: return "POSE_UPDATE";
    case MessageType::kPoseBroadcast: return "POSE_BROADCAST";
    case MessageType::kTextureRequest: return "TEXTURE_REQUEST";
    case MessageType::kTextureImage: return "TEXTURE_IMAGE";
    case MessageType::kResetRequest: return "RESET_REQUEST";
    case MessageType::kResetBlocks: return "RESET_BLOCKS";
    case MessageType::kDeleteBlocks: return "DELETE_BLOCKS";
    case MessageType::kStats: return "STATS";
  }
  return "UNKNOWN";
}

Codec parse_codec(const std::string& s) {
  if (s == "0" || s == "identity" || s == "none") return Codec::kIdentity;
  if (s == "1" || s == "deflate" || s == "zlib") return Codec::kDeflate;
  if (s == "2" || s == "zstd") return Codec::kZstd;
  throw std::invalid_argument("unknown codec: " + s);
}

const char* protocol_errc_name(ProtocolErrc c) {
  switch (c) {
    case ProtocolErrc::kBadMagic: return "bad_magic";
    case ProtocolErrc::kBadVersion: return "bad_version";
    case ProtocolErrc::kLengthMismatch: return "length_mismatch";
    case ProtocolErrc::kCodecUnsupported: return "codec_unsupported";
    case ProtocolErrc::kDecompressFailure: return "decompress_failure";
    case ProtocolErrc::kMalformedPayload: return "malformed_payload";
    case ProtocolErrc::kOversize: return "oversize";
  }
  return "unknown";
}

ProtocolError::ProtocolError(ProtocolErrc code, const std::string& what)
    : std::runtime_error(std::string(protocol_errc_name(code)) + ": " + what), code_(code) {}

namespace {

std::vector<std::uint8_t> deflate(std::span<const std::uint8_t> raw) {
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> out(bound);
  if (compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), Z_DEFAULT_COMPRESSION) != Z_OK) {
    throw std::runtime_error("zlib compression failed");
  }
  out.resize(bound);
  return out;
}

std::vector<std::uint8_t> inflate(std::span<const std::uint8_t> data, std::uint32_t raw_len) {
  std::vector<std::uint8_t> out(raw_len);
  uLongf len = raw_len;
  const int rc = uncompress(out.data(), &len, data.data(), static_cast<uLong>(data.size()));
  if (rc == Z_BUF_ERROR && len == raw_len) {
    throw ProtocolError(ProtocolErrc::kLengthMismatch, "deflate output exceeds declared size");
  }
  if (rc != Z_OK) throw ProtocolError(ProtocolErrc::kDecompressFailure, "zlib error " + std::to_string(rc));
  if (len != raw_len) throw ProtocolError(ProtocolErrc::kLengthMismatch, "deflate output shorter than declared");
  return out;
}

constexpr int kZstdLevel = 3;

std::vector<std::uint8_t> zstd_compress(std::span<const std::uint8_t> raw) {
  thread_local std::unique_ptr<ZSTD_CCtx, decltype(&ZSTD_freeCCtx)> ctx(ZSTD_createCCtx(), &ZSTD_freeCCtx);
  std::vector<std::uint8_t> out(ZSTD_compressBound(raw.size()));
  const std::size_t n = ZSTD_compressCCtx(ctx.get(), out.data(), out.size(), raw.data(), raw.size(), kZstdLevel);
  if (ZSTD_isError(n)) throw std::runtime_error(std::string("zstd compression failed: ") + ZSTD_getErrorName(n));
  out.resize(n);
  return out;
}

std::vector<std::uint8_t> zstd_decompress(std::span<const std::uint8_t> data, std::uint32_t raw_len) {
  const unsigned long long declared = ZSTD_getFrameContentSize(data.data(), data.size());
  if (declared == ZSTD_CONTENTSIZE_ERROR) throw ProtocolError(ProtocolErrc::kDecompressFailure, "not a zstd frame");
  if (declared != ZSTD_CONTENTSIZE_UNKNOWN && declared != raw_len) {
    throw ProtocolError(ProtocolErrc::kLengthMismatch, "zstd content size differs from declared size");
  }
  thread_local std::unique_ptr<ZSTD_DCtx, decltype(&ZSTD_freeDCtx)> ctx(ZSTD_createDCtx(), &ZSTD_freeDCtx);
  std::vector<std::uint8_t> out(raw_len);
  const std::size_t n = ZSTD_decompressDCtx(ctx.get(), out.data(), out.size(), data.data(), data.size());
  if (ZSTD_isError(n)) {
    if (ZSTD_getErrorCode(n) == ZSTD_error_dstSize_tooSmall) {
      throw ProtocolError(ProtocolErrc::kLengthMismatch, "zstd output exceeds declared size");
    }
    throw ProtocolError(ProtocolErrc::kDecompressFailure, std::string("zstd: ") + ZSTD_getErrorName(n));
  }
  if (n != raw_len) throw ProtocolError(ProtocolErrc::kLengthMismatch, "zstd output shorter than declared");
  return out;
}

}  // namespace

std::vector<std::uint8_t> compress_payload(Codec codec, std::span<const std::uint8_t> raw) {
  switch (codec) {
    case Codec::kIdentity: return {raw.begin(), raw.end()};
    case Codec::kDeflate: return deflate(raw);
    case Codec::kZstd: return zstd_compress(raw);
  }
  throw ProtocolError(ProtocolErrc::kCodecUnsupported, "codec " + std::to_string(static_cast<int>(codec)));
}

std::vector<std::uint8_t> decompress_payload(Codec codec, std::span<const std::uint8_t> data, std::uint32_t raw_len) {
  switch (codec) {
    case Codec::kIdentity:
      if (data.size() != raw_len) throw ProtocolError(ProtocolErrc::kLengthMismatch, "identity payload size");
      return {data.begin(), data.end()};
    case Codec::kDeflate: return inflate(data, raw_len);
    case Codec::kZstd: return zstd_decompress(data, raw_len);
  }
  throw ProtocolError(ProtocolErrc::kCodecUnsupported, "codec " + std::to_string(static_cast<int>(codec)));
}

std::vector<std::uint8_t> encode_frame(MessageType type, std::span<const std::uint8_t> raw, Codec codec) {
  if (raw.size() > kMaxPayloadBytes) throw ProtocolError(ProtocolErrc::kOversize, "payload too large");
  std::vector<std::uint8_t> body;
  if (codec != Codec::kIdentity && !raw.empty()) {
    body = compress_payload(codec, raw);
    if (body.size() >= raw.size()) codec = Codec::kIdentity;
  } else {
    codec = Codec::kIdentity;
  }
  const std::span<const std::uint8_t> payload = codec == Codec::kIdentity ? raw : std::span<const std::uint8_t>(body);
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + payload.size());
  ByteWriter w(out);
  w.put(std::uint8_t{'V'});
  w.put(std::uint8_t{'C'});
  w.put(kProtocolVersion);
  w.put(static_cast<std::uint8_t>(type));
  w.put(static_cast<std::uint8_t>(codec));
  for (int i = 0; i < 3; ++i) w.put(std::uint8_t{0});
  w.put(static_cast<std::uint32_t>(payload.size()));
  w.put(static_cast<std::uint32_t>(raw.size()));
  w.put_bytes(payload);
  return out;
}

MessageHeader parse_header(std::span<const std::uint8_t, kHeaderBytes> bytes) {
  if (bytes[0] != 'V' || bytes[1] != 'C') throw ProtocolError(ProtocolErrc::kBadMagic, "expected \"VC\"");
  if (bytes[2] != kProtocolVersion) {
    throw ProtocolError(ProtocolErrc::kBadVersion, "version " + std::to_string(bytes[2]));
  }
  MessageHeader h;
  h.type = static_cast<MessageType>(bytes[3]);
  if (bytes[4] > static_cast<std::uint8_t>(Codec::kZstd)) {
    throw ProtocolError(ProtocolErrc::kCodecUnsupported, "codec " + std::to_string(bytes[4]));
  }
  h.codec = static_cast<Codec>(bytes[4]);
  ByteReader r(std::span<const std::uint8_t>(bytes).subspan(8));
  h.compressed_len = r.get<std::uint32_t>();
  h.raw_len = r.get<std::uint32_t>();
  if (h.compressed_len > kMaxPayloadBytes || h.raw_len > kMaxPayloadBytes) {
    throw ProtocolError(ProtocolErrc::kOversize, "declared payload too large");
  }
  if (h.codec == Codec::kIdentity && h.compressed_len != h.raw_len) {
    throw ProtocolError(ProtocolErrc::kLengthMismatch, "identity frame with differing lengths");
  }
  return h;
}

void FrameDecoder::feed(std::span<const std::uint8_t> chunk) {
  if (failed_) throw *failed_;
  buf_.insert(buf_.end(), chunk.begin(), chunk.end());
  try {
    while (buf_.size() - pos_ >= kHeaderBytes) {
      const MessageHeader h = parse_header(std::span<const std::uint8_t, kHeaderBytes>(buf_.data() + pos_, kHeaderBytes));
      const std::size_t total = kHeaderBytes + h.compressed_len;
      if (buf_.size() - pos_ < total) break;
      Message m;
      m.type = h.type;
      m.payload = decompress_payload(h.codec, {buf_.data() + pos_ + kHeaderBytes, h.compressed_len}, h.raw_len);
      m.wire_bytes = total;
      ready_.push_back(std::move(m));
      pos_ += total;
    }
  } catch (const ProtocolError& e) {
    failed_ = e;
    throw;
  }
  if (pos_ > 0 && pos_ * 2 >= buf_.size()) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ = 0;
  }
}

std::optional<Message> FrameDecoder::next() {
  if (ready_.empty()) return std::nullopt;
  Message m = std::move(ready_.front());
  ready_.pop_front();
  return m;
}

Message decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) throw ProtocolError(ProtocolErrc::kLengthMismatch, "frame shorter than header");
  const MessageHeader h = parse_header(bytes.first<kHeaderBytes>());
  if (bytes.size() != kHeaderBytes + h.compressed_len) {
    throw ProtocolError(ProtocolErrc::kLengthMismatch, "frame size disagrees with header");
  }
  Message m;
  m.type = h.type;
  m.payload = decompress_payload(h.codec, bytes.subspan(kHeaderBytes), h.raw_len);
  m.wire_bytes = bytes.size();
  return m;
}

}  // namespace voxstream
