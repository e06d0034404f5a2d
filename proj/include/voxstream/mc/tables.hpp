#pragma once

#include <array>
#include <cstdint>

namespace voxstream {

namespace mc_tables {
/// Published Marching Cubes tables in Bourke numbering: corners
/// 0..3 counter-clockwise on the z = 0 face starting at the origin, 4..7
/// above them; edges 0..3 bottom ring, 4..7 top ring, 8..11 verticals.
extern const std::uint16_t kEdgeTable[256];
extern const std::int8_t kTriTable[256][16];
}  // namespace mc_tables

/// Wire cube indices number corner k at offset (k & 1, k >> 1 & 1, k >> 2 & 1).
/// Bourke numbering swaps corners 2/3 and 6/7 relative to that.
constexpr std::uint8_t wire_to_bourke_index(std::uint8_t i) {
  const auto bit = [i](int k) { return (i >> k) & 1; };
  return static_cast<std::uint8_t>(bit(0) | bit(1) << 1 | bit(3) << 2 | bit(2) << 3 | bit(4) << 4 | bit(5) << 5 |
                                   bit(7) << 6 | bit(6) << 7);
}

/// Bourke corner positions (unit cube offsets).
inline constexpr std::array<std::array<int, 3>, 8> kBourkeCorners = {{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};

/// Bourke edge endpoints as corner pairs.
inline constexpr std::array<std::array<int, 2>, 12> kBourkeEdges = {{
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
}};

/// Number of triangles the case table emits for a wire cube index.
int mc_triangle_count(std::uint8_t wire_index);

}  // namespace voxstream
