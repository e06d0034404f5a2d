#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>

namespace voxstream {

/// Integer coordinate of a voxel block in the infinite block grid (units of one block edge).
struct BlockKey {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t z = 0;

  friend constexpr bool operator==(const BlockKey&, const BlockKey&) = default;
  friend constexpr auto operator<=>(const BlockKey&, const BlockKey&) = default;

  constexpr BlockKey operator+(const BlockKey& o) const { return {x + o.x, y + o.y, z + o.z}; }
};

inline std::ostream& operator<<(std::ostream& os, const BlockKey& k) {
  return os << '(' << k.x << ',' << k.y << ',' << k.z << ')';
}

/// Standard-library hasher for host-side containers (unordered_set in tests, dedupe passes).
struct BlockKeyHasher {
  std::size_t operator()(const BlockKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint32_t>(k.x);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(k.y);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(k.z);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

/// Floor division for block/region arithmetic on negative coordinates.
constexpr std::int32_t floor_div(std::int32_t a, std::int32_t b) {
  std::int32_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

constexpr std::int32_t floor_mod(std::int32_t a, std::int32_t b) { return a - floor_div(a, b) * b; }

}  // namespace voxstream
