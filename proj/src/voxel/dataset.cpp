#include "voxstream/voxel/dataset.hpp"

#include <array>
#include <cstring>
#include <vector>

#include "voxstream/common/bytes.hpp"

namespace voxstream {
namespace {

constexpr char kMagic[] = "VCSEQ1";
constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kHeaderLen = kMagicLen + 6 * 4 + 2 * 4;
constexpr std::size_t kFrameHeadLen = 8 + 12 * 4 + 2 * 4;
constexpr std::uint64_t kMaxPixels = 1ull << 26;

void write_bytes(std::ofstream& out, const std::vector<std::uint8_t>& buf) {
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DatasetError("dataset write failed");
}

// Reads exactly n bytes; returns false only when nothing at all was read.
bool read_exact(std::ifstream& in, std::vector<std::uint8_t>& buf, std::size_t n) {
  buf.resize(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got == 0 && n > 0) return false;
  if (got != n) throw DatasetError("dataset truncated");
  return true;
}

}  // namespace

SequenceWriter::SequenceWriter(const std::filesystem::path& path, const SensorInfo& sensor)
    : out_(path, std::ios::binary | std::ios::trunc), sensor_(sensor) {
  if (!out_) throw DatasetError("cannot open " + path.string() + " for writing");
  sensor.intrinsics.validate();
  std::vector<std::uint8_t> buf;
  ByteWriter w(buf);
  w.put_string(std::string_view(kMagic, kMagicLen));
  const auto& k = sensor.intrinsics;
  for (float f : {k.fx, k.fy, k.cx, k.cy, sensor.near_m, sensor.far_m}) w.put(f);
  w.put(k.width);
  w.put(k.height);
  write_bytes(out_, buf);
}

void SequenceWriter::write(const Frame& frame) {
  frame.validate();
  std::vector<std::uint8_t> buf;
  buf.reserve(kFrameHeadLen + frame.depth.size() * 4 + frame.rgb.size());
  ByteWriter w(buf);
  w.put(frame.timestamp_us);
  for (float f : frame.pose.to_array()) w.put(f);
  w.put(frame.width);
  w.put(frame.height);
  for (float d : frame.depth) w.put(d);
  w.put_bytes(frame.rgb);
  write_bytes(out_, buf);
  out_.flush();
  ++frames_;
}

SequenceReader::SequenceReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
  if (!in_) throw DatasetError("cannot open " + path.string());
  std::vector<std::uint8_t> buf;
  if (!read_exact(in_, buf, kHeaderLen)) throw DatasetError("empty dataset file");
  ByteReader r(buf);
  if (r.get_string(kMagicLen) != std::string_view(kMagic, kMagicLen)) throw DatasetError("bad dataset magic");
  auto& k = sensor_.intrinsics;
  k.fx = r.get<float>();
  k.fy = r.get<float>();
  k.cx = r.get<float>();
  k.cy = r.get<float>();
  sensor_.near_m = r.get<float>();
  sensor_.far_m = r.get<float>();
  k.width = r.get<std::uint32_t>();
  k.height = r.get<std::uint32_t>();
  try {
    k.validate();
  } catch (const std::invalid_argument& e) {
    throw DatasetError(std::string("dataset header: ") + e.what());
  }
}

std::optional<Frame> SequenceReader::next() {
  std::vector<std::uint8_t> buf;
  if (!read_exact(in_, buf, kFrameHeadLen)) return std::nullopt;
  ByteReader r(buf);
  Frame f;
  f.timestamp_us = r.get<std::uint64_t>();
  std::array<float, 12> pose{};
  for (float& v : pose) v = r.get<float>();
  f.pose = Pose::from_array(pose);
  f.width = r.get<std::uint32_t>();
  f.height = r.get<std::uint32_t>();
  const std::uint64_t n = static_cast<std::uint64_t>(f.width) * f.height;
  if (n == 0 || n > kMaxPixels) throw DatasetError("dataset frame has invalid size");
  if (!read_exact(in_, buf, n * 4)) throw DatasetError("dataset truncated");
  ByteReader dr(buf);
  f.depth.resize(n);
  for (float& d : f.depth) d = dr.get<float>();
  if (!read_exact(in_, f.rgb, n * 3)) throw DatasetError("dataset truncated");
  return f;
}

}  // namespace voxstream
