#pragma once

#include <cstddef>
#include <deque>
#include <mutex>
#include <vector>

#include "voxstream/hash/hash_table.hpp"

namespace voxstream {

/// Per-destination set of block keys awaiting transmission.
///
/// Insertion collapses duplicates; every extraction removes what it returns.
/// A side queue remembers first-insertion order for generation-order requests;
/// it may hold keys that were already extracted through another path, which
/// are skipped (and periodically compacted away).
class StreamSet {
 public:
  explicit StreamSet(HashConfig cfg) : set_(cfg) {}

  /// True when the key was newly queued. Throws std::length_error when the
  /// underlying table is out of collision entries.
  bool insert(const BlockKey& key);

  /// Inserts all keys; returns how many were new.
  std::size_t insert_all(const std::vector<BlockKey>& keys);

  bool erase(const BlockKey& key) { return set_.erase(key); }
  bool contains(const BlockKey& key) const { return set_.contains(key); }
  std::size_t size() const { return set_.size(); }
  bool empty() const { return set_.empty(); }

  std::vector<BlockKey> extract_batch(std::size_t max_n) { return set_.extract_batch(max_n); }

  template <class Pred>
  std::vector<BlockKey> extract_matching(std::size_t max_n, Pred&& pred) {
    return set_.extract_matching(max_n, std::forward<Pred>(pred));
  }

  /// Oldest-first extraction following first-insertion order.
  std::vector<BlockKey> extract_in_order(std::size_t max_n);

  std::vector<BlockKey> snapshot_keys() const { return set_.snapshot_keys(); }

  const ConcurrentHashSet& table() const { return set_; }

 private:
  void compact_locked();

  ConcurrentHashSet set_;
  std::mutex order_mu_;
  std::deque<BlockKey> order_;
};

}  // namespace voxstream
