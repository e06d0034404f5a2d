#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>

namespace voxstream {

/// Lock-free LIFO of entry indices in [base, base + capacity).
///
/// Implemented as a Treiber stack threaded through a per-slot link array; the
/// head word carries a 32-bit tag next to the slot id so a pop that races with
/// a pop/push pair of the same slot cannot install a stale link.
class FreeListStack {
 public:
  /// Creates a stack for indices [base, base + capacity). When `filled`, every
  /// index is present and pops return them in ascending order.
  FreeListStack(std::uint32_t capacity, std::uint32_t base = 0, bool filled = false);

  FreeListStack(const FreeListStack&) = delete;
  FreeListStack& operator=(const FreeListStack&) = delete;

  /// Precondition: `index` is in range and not currently in the stack.
  void push(std::uint32_t index);

  /// Empty optional when the stack holds no index.
  std::optional<std::uint32_t> pop();

  /// Exact at quiescence; a momentary estimate under concurrency.
  std::uint32_t size() const { return static_cast<std::uint32_t>(std::max<std::int64_t>(0, size_.load(std::memory_order_relaxed))); }
  std::uint32_t capacity() const { return capacity_; }
  std::uint32_t base() const { return base_; }

 private:
  static constexpr std::uint32_t kNil = 0;  // head/link value for "no slot"; slots are stored +1

  static std::uint64_t pack(std::uint32_t tag, std::uint32_t slot_plus_one) {
    return (static_cast<std::uint64_t>(tag) << 32) | slot_plus_one;
  }

  std::uint32_t capacity_;
  std::uint32_t base_;
  std::unique_ptr<std::atomic<std::uint32_t>[]> links_;
  std::atomic<std::uint64_t> head_{0};
  std::atomic<std::int64_t> size_{0};
};

}  // namespace voxstream
