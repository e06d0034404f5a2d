#pragma once

#include <cstdint>
#include <stdexcept>

#include "voxstream/block_key.hpp"

namespace voxstream {

inline constexpr std::uint32_t kHashPrime1 = 73856093u;
inline constexpr std::uint32_t kHashPrime2 = 19349669u;
inline constexpr std::uint32_t kHashPrime3 = 83492791u;

/// Sizing of a fixed-capacity hash table: n bucket entries followed by an
/// excess region that holds the collision lists.
struct HashConfig {
  std::uint32_t bucket_count = 1u << 20;
  std::uint32_t excess_capacity = 1u << 20;

  void validate() const {
    if (bucket_count == 0 || excess_capacity == 0) {
      throw std::invalid_argument("hash config: bucket_count and excess_capacity must be positive");
    }
    if (static_cast<std::uint64_t>(bucket_count) + excess_capacity >= 0xFFFFFFFFull) {
      throw std::invalid_argument("hash config: total capacity exceeds 32-bit entry indices");
    }
  }
};

/// Spatial hash of a block coordinate into [0, bucket_count).
///
/// Products wrap modulo 2^32 and are combined with XOR as signed 32-bit words;
/// the reduction is a non-negative modulo. This exact arithmetic is part of the
/// wire contract so that independent implementations agree on bucket layout.
constexpr std::uint32_t hash_key(const BlockKey& key, std::uint32_t bucket_count) {
  const auto wrap = [](std::int32_t c, std::uint32_t p) {
    return static_cast<std::int32_t>(static_cast<std::uint32_t>(c) * p);
  };
  const std::int32_t mixed = wrap(key.x, kHashPrime1) ^ wrap(key.y, kHashPrime2) ^ wrap(key.z, kHashPrime3);
  std::int64_t r = static_cast<std::int64_t>(mixed) % static_cast<std::int64_t>(bucket_count);
  if (r < 0) r += bucket_count;
  return static_cast<std::uint32_t>(r);
}

}  // namespace voxstream
