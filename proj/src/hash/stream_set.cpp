#include "voxstream/hash/stream_set.hpp"

#include <stdexcept>
#include <unordered_set>

namespace voxstream {

bool StreamSet::insert(const BlockKey& key) {
  const InsertResult r = set_.insert(key);
  if (r.status == HashStatus::kCapacityExhausted) throw std::length_error("stream set capacity exhausted");
  if (!r.inserted) return false;
  std::lock_guard lock(order_mu_);
  order_.push_back(key);
  if (order_.size() > 2 * set_.size() + 4096) compact_locked();
  return true;
}

std::size_t StreamSet::insert_all(const std::vector<BlockKey>& keys) {
  std::size_t added = 0;
  for (const auto& k : keys) added += insert(k) ? 1 : 0;
  return added;
}

std::vector<BlockKey> StreamSet::extract_in_order(std::size_t max_n) {
  std::vector<BlockKey> out;
  std::lock_guard lock(order_mu_);
  while (out.size() < max_n && !order_.empty()) {
    const BlockKey k = order_.front();
    order_.pop_front();
    if (set_.erase(k)) out.push_back(k);
  }
  return out;
}

void StreamSet::compact_locked() {
  std::deque<BlockKey> kept;
  std::unordered_set<BlockKey, BlockKeyHasher> seen;
  for (const auto& k : order_) {
    if (set_.contains(k) && seen.insert(k).second) kept.push_back(k);
  }
  order_.swap(kept);
}

}  // namespace voxstream
