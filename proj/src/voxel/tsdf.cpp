#include "voxstream/voxel/tsdf.hpp"

#include <stdexcept>

#include "voxstream/common/bytes.hpp"

namespace voxstream {

void encode_tsdf_voxels(const TsdfVoxels& voxels, std::vector<std::uint8_t>& out) {
  ByteWriter w(out);
  for (const TsdfVoxel& v : voxels) {
    w.put(v.tsdf);
    w.put(v.weight);
    w.put(v.color.r);
    w.put(v.color.g);
    w.put(v.color.b);
    w.put(std::uint8_t{0});
  }
}

TsdfVoxels decode_tsdf_voxels(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kTsdfBlockWireBytes) throw std::invalid_argument("tsdf block payload must be 6144 bytes");
  ByteReader r(bytes);
  TsdfVoxels voxels;
  for (TsdfVoxel& v : voxels) {
    v.tsdf = r.get<float>();
    v.weight = r.get<float>();
    v.color.r = r.get<std::uint8_t>();
    v.color.g = r.get<std::uint8_t>();
    v.color.b = r.get<std::uint8_t>();
    r.get<std::uint8_t>();
    v.pad = 0;
  }
  return voxels;
}

void FusionConfig::validate() const {
  if (!(voxel_size > 0.f)) throw std::invalid_argument("voxel_size must be positive");
  if (truncation < 4.f * voxel_size) throw std::invalid_argument("truncation must be at least 4 voxels");
  if (!(max_weight >= 1.f)) throw std::invalid_argument("max_weight must be at least 1");
  if (!(min_depth >= 0.f && max_depth > min_depth)) throw std::invalid_argument("invalid depth range");
}

}  // namespace voxstream
