#include "voxstream/mc/mc_block.hpp"

#include <stdexcept>

#include "voxstream/common/bytes.hpp"
#include "voxstream/mc/tables.hpp"

namespace voxstream {

int mc_triangle_count(std::uint8_t wire_index) {
  const std::int8_t* row = mc_tables::kTriTable[wire_to_bourke_index(wire_index)];
  int n = 0;
  while (n < 16 && row[n] >= 0) ++n;
  return n / 3;
}

void encode_mc_voxels(const McVoxels& voxels, std::vector<std::uint8_t>& out) {
  const std::size_t at = out.size();
  out.resize(at + kMcBlockWireBytes);
  std::uint8_t* p = out.data() + at;
  for (const McVoxel& v : voxels) {
    p[0] = v.index;
    p[1] = v.color.r;
    p[2] = v.color.g;
    p[3] = v.color.b;
    p += kMcVoxelWireBytes;
  }
}

McVoxels decode_mc_voxels(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kMcBlockWireBytes) throw std::invalid_argument("mc block payload must be 2048 bytes");
  McVoxels voxels;
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    voxels[i] = {bytes[4 * i], {bytes[4 * i + 1], bytes[4 * i + 2], bytes[4 * i + 3]}};
  }
  return voxels;
}

std::uint8_t compute_mc_index(const std::array<TsdfVoxel, 8>& corners) {
  std::uint8_t index = 0;
  for (int k = 0; k < 8; ++k) {
    if (!(corners[k].weight > 0.f)) return 0;
    if (corners[k].tsdf < 0.f) index |= static_cast<std::uint8_t>(1u << k);
  }
  return index;
}

std::array<BlockKey, 8> affected_mc_blocks(const BlockKey& updated) {
  std::array<BlockKey, 8> out;
  for (int d = 0; d < 8; ++d) out[d] = updated + BlockKey{-(d & 1), -((d >> 1) & 1), -((d >> 2) & 1)};
  return out;
}

McBlock recompute_mc_block(const BlockKey& key, const std::array<const TsdfVoxels*, 8>& sources) {
  McBlock out;
  out.key = key;
  const TsdfVoxels* self = sources[0];
  if (self == nullptr) return out;
  std::array<TsdfVoxel, 8> corners;
  for (int z = 0; z < kBlockEdge; ++z) {
    for (int y = 0; y < kBlockEdge; ++y) {
      for (int x = 0; x < kBlockEdge; ++x) {
        bool observed = true;
        for (int k = 0; k < 8 && observed; ++k) {
          const int cx = x + (k & 1), cy = y + ((k >> 1) & 1), cz = z + ((k >> 2) & 1);
          const int src = (cx >> 3) | ((cy >> 3) << 1) | ((cz >> 3) << 2);
          const TsdfVoxels* block = sources[src];
          if (block == nullptr) {
            observed = false;
            break;
          }
          corners[k] = (*block)[voxel_index(cx & 7, cy & 7, cz & 7)];
        }
        if (!observed) continue;
        const int i = voxel_index(x, y, z);
        out.voxels[i] = apply_cutoff({compute_mc_index(corners), (*self)[i].color});
      }
    }
  }
  return out;
}

McBlock recompute_mc_block(const BlockKey& key, const TsdfLookup& lookup) {
  std::array<std::optional<TsdfVoxels>, 8> fetched;
  std::array<const TsdfVoxels*, 8> sources{};
  fetched[0] = lookup(key);
  if (!fetched[0]) {
    McBlock empty;
    empty.key = key;
    return empty;
  }
  sources[0] = &*fetched[0];
  for (int d = 1; d < 8; ++d) {
    fetched[d] = lookup(key + BlockKey{d & 1, (d >> 1) & 1, (d >> 2) & 1});
    if (fetched[d]) sources[d] = &*fetched[d];
  }
  return recompute_mc_block(key, sources);
}

}  // namespace voxstream
