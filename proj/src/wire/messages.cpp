#include "voxstream/wire/messages.hpp"

#include <cstdio>
#include <random>

#include "voxstream/common/bytes.hpp"

namespace voxstream {

ClientId random_client_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  ClientId id;
  for (std::size_t i = 0; i < id.size(); i += 8) {
    const std::uint64_t v = rng();
    for (std::size_t j = 0; j < 8; ++j) id[i + j] = static_cast<std::uint8_t>(v >> (8 * j));
  }
  return id;
}

std::string to_hex(const ClientId& id) {
  std::string s;
  char buf[3];
  for (std::uint8_t b : id) {
    std::snprintf(buf, sizeof buf, "%02x", b);
    s += buf;
  }
  return s;
}

RequestStrategy parse_strategy(const std::string& s) {
  if (s == "order" || s == "0") return RequestStrategy::kGenerationOrder;
  if (s == "visible" || s == "1") return RequestStrategy::kVisibleFirst;
  if (s == "random" || s == "2") return RequestStrategy::kRandom;
  throw std::invalid_argument("unknown strategy: " + s);
}

const char* strategy_name(RequestStrategy s) {
  switch (s) {
    case RequestStrategy::kGenerationOrder: return "order";
    case RequestStrategy::kVisibleFirst: return "visible";
    case RequestStrategy::kRandom: return "random";
  }
  return "unknown";
}

namespace {

void put_key(ByteWriter& w, const BlockKey& k) {
  w.put(k.x);
  w.put(k.y);
  w.put(k.z);
}

BlockKey get_key(ByteReader& r) {
  BlockKey k;
  k.x = r.get<std::int32_t>();
  k.y = r.get<std::int32_t>();
  k.z = r.get<std::int32_t>();
  return k;
}

void put_pose(ByteWriter& w, const Pose& p) {
  for (float f : p.to_array()) w.put(f);
}

Pose get_pose(ByteReader& r) {
  std::array<float, 12> a{};
  for (float& f : a) f = r.get<float>();
  return Pose::from_array(a);
}

void put_id(ByteWriter& w, const ClientId& id) { w.put_bytes(id); }

ClientId get_id(ByteReader& r) {
  ClientId id;
  const auto b = r.get_bytes(id.size());
  std::copy(b.begin(), b.end(), id.begin());
  return id;
}

ClientRole get_role(ByteReader& r) {
  const auto v = r.get<std::uint8_t>();
  if (v != 1 && v != 2) throw ProtocolError(ProtocolErrc::kMalformedPayload, "unknown role");
  return static_cast<ClientRole>(v);
}

// Runs the reader body and turns short/long input into a protocol error.
template <class T, class Fn>
T parse_with(std::span<const std::uint8_t> payload, Fn&& fn) {
  ByteReader r(payload);
  try {
    T out = fn(r);
    if (r.remaining() != 0) throw ProtocolError(ProtocolErrc::kMalformedPayload, "trailing payload bytes");
    return out;
  } catch (const TruncatedInput&) {
    throw ProtocolError(ProtocolErrc::kMalformedPayload, "payload too short");
  }
}

std::uint32_t get_count(ByteReader& r, std::size_t entry_bytes) {
  const auto n = r.get<std::uint32_t>();
  if (static_cast<std::uint64_t>(n) * entry_bytes != r.remaining()) {
    throw ProtocolError(ProtocolErrc::kMalformedPayload, "count disagrees with payload size");
  }
  return n;
}

std::vector<std::uint8_t> serialize_keys(const std::vector<BlockKey>& keys) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.put(static_cast<std::uint32_t>(keys.size()));
  for (const auto& k : keys) put_key(w, k);
  return out;
}

std::vector<BlockKey> parse_keys(ByteReader& r) {
  const std::uint32_t n = get_count(r, 12);
  std::vector<BlockKey> keys(n);
  for (auto& k : keys) k = get_key(r);
  return keys;
}

}  // namespace

std::vector<std::uint8_t> serialize(const Hello& m) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.put(static_cast<std::uint8_t>(m.role));
  put_id(w, m.client_id);
  w.put(m.voxel_size);
  w.put(m.block_edge);
  return out;
}

template <>
Hello parse<Hello>(std::span<const std::uint8_t> p) {
  return parse_with<Hello>(p, [](ByteReader& r) {
    Hello m;
    m.role = get_role(r);
    m.client_id = get_id(r);
    m.voxel_size = r.get<float>();
    m.block_edge = r.get<std::uint8_t>();
    return m;
  });
}

std::vector<std::uint8_t> serialize(const HelloAck& m) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.put(static_cast<std::uint8_t>(m.status));
  w.put(static_cast<std::uint8_t>(m.resumed ? 1 : 0));
  w.put(m.pending);
  w.put(m.voxel_size);
  w.put(m.block_edge);
  return out;
}

template <>
HelloAck parse<HelloAck>(std::span<const std::uint8_t> p) {
  return parse_with<HelloAck>(p, [](ByteReader& r) {
    HelloAck m;
    const auto status = r.get<std::uint8_t>();
    if (status > 2) throw ProtocolError(ProtocolErrc::kMalformedPayload, "unknown ack status");
    m.status = static_cast<AckStatus>(status);
    m.resumed = r.get<std::uint8_t>() != 0;
    m.pending = r.get<std::uint32_t>();
    m.voxel_size = r.get<float>();
    m.block_edge = r.get<std::uint8_t>();
    return m;
  });
}

void append_tsdf_batch_header(std::uint32_t count, std::vector<std::uint8_t>& out) { ByteWriter(out).put(count); }

void append_tsdf_batch_entry(const BlockKey& key, const TsdfVoxels& voxels, std::vector<std::uint8_t>& out) {
  ByteWriter w(out);
  put_key(w, key);
  encode_tsdf_voxels(voxels, out);
}

void append_mc_batch_entry(const BlockKey& key, const McVoxels& voxels, std::vector<std::uint8_t>& out) {
  ByteWriter w(out);
  put_key(w, key);
  encode_mc_voxels(voxels, out);
}

std::vector<std::uint8_t> serialize(const TsdfBatch& m) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + m.blocks.size() * kTsdfBatchBytesPerBlock);
  append_tsdf_batch_header(static_cast<std::uint32_t>(m.blocks.size()), out);
  for (const auto& b : m.blocks) append_tsdf_batch_entry(b.key, b.voxels, out);
  return out;
}

template <>
TsdfBatch parse<TsdfBatch>(std::span<const std::uint8_t> p) {
  return parse_with<TsdfBatch>(p, [](ByteReader& r) {
    TsdfBatch m;
    m.blocks.resize(get_count(r, kTsdfBatchBytesPerBlock));
    for (auto& b : m.blocks) {
      b.key = get_key(r);
      b.voxels = decode_tsdf_voxels(r.get_bytes(kTsdfBlockWireBytes));
    }
    return m;
  });
}

std::vector<std::uint8_t> serialize(const McBatch& m) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + m.blocks.size() * kMcBatchBytesPerBlock);
  ByteWriter(out).put(static_cast<std::uint32_t>(m.blocks.size()));
  for (const auto& b : m.blocks) append_mc_batch_entry(b.key, b.voxels, out);
  return out;
}

template <>
McBatch parse<McBatch>(std::span<const std::uint8_t> p) {
  return parse_with<McBatch>(p, [](ByteReader& r) {
    McBatch m;
    m.blocks.resize(get_count(r, kMcBatchBytesPerBlock));
    for (auto& b : m.blocks) {
      b.key = get_key(r);
      b.voxels = decode_mc_voxels(r.get_bytes(kMcBlockWireBytes));
    }
    return m;
  });
}

std::vector<std::uint8_t> serialize(const BlockRequest& m) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.put(m.max_blocks);
  w.put(static_cast<std::uint8_t>(m.strategy));
  put_pose(w, m.pose);
  const auto& k = m.intrinsics;
  for (float f : {k.fx, k.fy, k.cx, k.cy, k.near_m, k.far_m}) w.put(f);
  return out;
}

template <>
BlockRequest parse<BlockRequest>(std::span<const std::uint8_t> p) {
  return parse_with<BlockRequest>(p, [](ByteReader& r) {
    BlockRequest m;
    m.max_blocks = r.get<std::uint32_t>();
    if (m.max_blocks == 0) throw ProtocolError(ProtocolErrc::kMalformedPayload, "max_blocks must be >= 1");
    const auto s = r.get<std::uint8_t>();
    if (s > 2) throw ProtocolError(ProtocolErrc::kMalformedPayload, "unknown strategy");
    m.strategy = static_cast<RequestStrategy>(s);
    m.pose = get_pose(r);
    auto& k = m.intrinsics;
    for (float* f : {&k.fx, &k.fy, &k.cx, &k.cy, &k.near_m, &k.far_m}) *f = r.get<float>();
    return m;
  });
}

std::vector<std::uint8_t> serialize(const PoseUpdate& m) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  put_pose(w, m.pose);
  return out;
}

template <>
PoseUpdate parse<PoseUpdate>(std::span<const std::uint8_t> p) {
  return parse_with<PoseUpdate>(p, [](ByteReader& r) { return PoseUpdate{get_pose(r)}; });
}

std::vector<std::uint8_t> serialize(const PoseBroadcast& m) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.put(static_cast<std::uint32_t>(m.poses.size()));
  for (const auto& pp : m.poses) {
    put_id(w, pp.client_id);
    w.put(static_cast<std::uint8_t>(pp.role));
    put_pose(w, pp.pose);
  }
  return out;
}

template <>
PoseBroadcast parse<PoseBroadcast>(std::span<const std::uint8_t> p) {
  return parse_with<PoseBroadcast>(p, [](ByteReader& r) {
    PoseBroadcast m;
    m.poses.resize(get_count(r, 16 + 1 + 48));
    for (auto& pp : m.poses) {
      pp.client_id = get_id(r);
      pp.role = get_role(r);
      pp.pose = get_pose(r);
    }
    return m;
  });
}

std::vector<std::uint8_t> serialize(const TextureRequest&) { return {}; }

template <>
TextureRequest parse<TextureRequest>(std::span<const std::uint8_t> p) {
  return parse_with<TextureRequest>(p, [](ByteReader&) { return TextureRequest{}; });
}

std::vector<std::uint8_t> serialize(const TextureImage& m) {
  std::vector<std::uint8_t> out;
  out.reserve(48 + 16 + 8 + m.rgb.size());
  ByteWriter w(out);
  put_pose(w, m.pose);
  for (float f : {m.fx, m.fy, m.cx, m.cy}) w.put(f);
  w.put(m.width);
  w.put(m.height);
  w.put_bytes(m.rgb);
  return out;
}

template <>
TextureImage parse<TextureImage>(std::span<const std::uint8_t> p) {
  return parse_with<TextureImage>(p, [](ByteReader& r) {
    TextureImage m;
    m.pose = get_pose(r);
    for (float* f : {&m.fx, &m.fy, &m.cx, &m.cy}) *f = r.get<float>();
    m.width = r.get<std::uint32_t>();
    m.height = r.get<std::uint32_t>();
    const std::uint64_t n = 3ull * m.width * m.height;
    if (n != r.remaining()) throw ProtocolError(ProtocolErrc::kMalformedPayload, "texture size mismatch");
    const auto px = r.get_bytes(n);
    m.rgb.assign(px.begin(), px.end());
    return m;
  });
}

std::vector<std::uint8_t> serialize(const ResetRequest&) { return {}; }

template <>
ResetRequest parse<ResetRequest>(std::span<const std::uint8_t> p) {
  return parse_with<ResetRequest>(p, [](ByteReader&) { return ResetRequest{}; });
}

std::vector<std::uint8_t> serialize(const ResetBlocks& m) { return serialize_keys(m.keys); }
std::vector<std::uint8_t> serialize(const DeleteBlocks& m) { return serialize_keys(m.keys); }

template <>
ResetBlocks parse<ResetBlocks>(std::span<const std::uint8_t> p) {
  return parse_with<ResetBlocks>(p, [](ByteReader& r) { return ResetBlocks{parse_keys(r)}; });
}

template <>
DeleteBlocks parse<DeleteBlocks>(std::span<const std::uint8_t> p) {
  return parse_with<DeleteBlocks>(p, [](ByteReader& r) { return DeleteBlocks{parse_keys(r)}; });
}

std::vector<std::uint8_t> serialize(const Stats& m) {
  if (m.code == StatsCode::kQuery) return {};
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.put(static_cast<std::uint16_t>(m.code));
  w.put(m.pending);
  w.put(m.tsdf_blocks);
  w.put(m.mc_blocks);
  const std::size_t len = std::min<std::size_t>(m.text.size(), 0xffff);
  w.put(static_cast<std::uint16_t>(len));
  w.put_string(std::string_view(m.text).substr(0, len));
  return out;
}

template <>
Stats parse<Stats>(std::span<const std::uint8_t> p) {
  if (p.empty()) return Stats{};
  return parse_with<Stats>(p, [](ByteReader& r) {
    Stats m;
    const auto code = r.get<std::uint16_t>();
    if (code == 0 || code > 4) throw ProtocolError(ProtocolErrc::kMalformedPayload, "unknown stats code");
    m.code = static_cast<StatsCode>(code);
    m.pending = r.get<std::uint32_t>();
    m.tsdf_blocks = r.get<std::uint64_t>();
    m.mc_blocks = r.get<std::uint64_t>();
    m.text = r.get_string(r.get<std::uint16_t>());
    return m;
  });
}

}  // namespace voxstream
