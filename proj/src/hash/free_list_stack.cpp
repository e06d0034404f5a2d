#include "voxstream/hash/free_list_stack.hpp"

#include <stdexcept>

namespace voxstream {

FreeListStack::FreeListStack(std::uint32_t capacity, std::uint32_t base, bool filled)
    : capacity_(capacity), base_(base), links_(new std::atomic<std::uint32_t>[capacity]) {
  if (capacity == 0 || capacity == 0xFFFFFFFFu) throw std::invalid_argument("free list: bad capacity");
  for (std::uint32_t i = 0; i < capacity; ++i) links_[i].store(kNil, std::memory_order_relaxed);
  if (filled) {
    // Slot i links to slot i+1, so the head (slot 0) pops first.
    for (std::uint32_t i = 0; i + 1 < capacity; ++i) links_[i].store(i + 2, std::memory_order_relaxed);
    head_.store(pack(0, 1), std::memory_order_relaxed);
    size_.store(capacity, std::memory_order_relaxed);
  }
}

void FreeListStack::push(std::uint32_t index) {
  if (index < base_ || index - base_ >= capacity_) throw std::out_of_range("free list: index out of range");
  const std::uint32_t node = index - base_ + 1;
  std::uint64_t head = head_.load(std::memory_order_relaxed);
  for (;;) {
    links_[node - 1].store(static_cast<std::uint32_t>(head), std::memory_order_relaxed);
    const std::uint64_t next = pack(static_cast<std::uint32_t>(head >> 32) + 1, node);
    if (head_.compare_exchange_weak(head, next, std::memory_order_release, std::memory_order_relaxed)) break;
  }
  size_.fetch_add(1, std::memory_order_relaxed);
}

std::optional<std::uint32_t> FreeListStack::pop() {
  std::uint64_t head = head_.load(std::memory_order_acquire);
  for (;;) {
    const auto node = static_cast<std::uint32_t>(head);
    if (node == kNil) return std::nullopt;
    const std::uint32_t below = links_[node - 1].load(std::memory_order_relaxed);
    const std::uint64_t next = pack(static_cast<std::uint32_t>(head >> 32) + 1, below);
    if (head_.compare_exchange_weak(head, next, std::memory_order_acquire, std::memory_order_acquire)) {
      size_.fetch_sub(1, std::memory_order_relaxed);
      return base_ + node - 1;
    }
  }
}

}  // namespace voxstream
