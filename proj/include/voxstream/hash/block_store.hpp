#pragma once

#include <array>
#include <atomic>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <vector>

#include "voxstream/hash/hash_table.hpp"

namespace voxstream {

/// Concurrent BlockKey -> Block model: a ConcurrentHashMap from key to a slot
/// in a lazily allocated block pool. Slot contents are guarded by striped
/// reader/writer locks and carry their owning key, so a lookup that races
/// with erase + slot reuse is detected and retried instead of reading the
/// wrong block.
template <class Block>
class BlockStore {
 public:
  BlockStore(HashConfig cfg, std::uint32_t pool_capacity = 0)
      : map_(cfg),
        pool_capacity_(pool_capacity != 0 ? pool_capacity : cfg.bucket_count + cfg.excess_capacity),
        chunks_(new std::atomic<Chunk*>[chunk_count()]),
        free_slots_(pool_capacity_, 0, /*filled=*/true) {
    for (std::uint32_t c = 0; c < chunk_count(); ++c) chunks_[c].store(nullptr, std::memory_order_relaxed);
  }

  ~BlockStore() {
    for (std::uint32_t c = 0; c < chunk_count(); ++c) delete chunks_[c].load(std::memory_order_relaxed);
  }

  BlockStore(const BlockStore&) = delete;
  BlockStore& operator=(const BlockStore&) = delete;

  struct UpsertResult {
    HashStatus status = HashStatus::kOk;
    bool created = false;
    bool ok() const { return status == HashStatus::kOk; }
  };

  /// Creates a value-initialized block when `key` is absent, then applies
  /// `fn(Block&)` under the block's exclusive lock.
  template <class Fn>
  UpsertResult upsert(const BlockKey& key, Fn&& fn) {
    for (;;) {
      if (auto found = map_.retrieve(key)) {
        Record& rec = record(found->value);
        std::unique_lock lock(stripe(found->value));
        if (rec.live && rec.key == key) {
          fn(rec.block);
          return {HashStatus::kOk, false};
        }
        continue;  // slot recycled under us
      }
      const std::optional<std::uint32_t> slot = free_slots_.pop();
      if (!slot) return {HashStatus::kCapacityExhausted, false};
      Record& rec = record(*slot);
      {
        std::unique_lock lock(stripe(*slot));
        rec.block = Block{};
        rec.key = key;
        rec.live = true;
      }
      const InsertResult r = map_.insert(key, *slot);
      if (!r.ok() || !r.inserted) {
        {
          std::unique_lock lock(stripe(*slot));
          rec.live = false;
        }
        free_slots_.push(*slot);
        if (!r.ok()) return {r.status, false};
        continue;  // another thread created it first; update theirs
      }
      std::unique_lock lock(stripe(*slot));
      if (rec.live && rec.key == key) fn(rec.block);
      return {HashStatus::kOk, true};
    }
  }

  /// Inserts or overwrites the block.
  UpsertResult put(const BlockKey& key, const Block& block) {
    return upsert(key, [&](Block& b) { b = block; });
  }

  /// Applies `fn(const Block&)` under a shared lock; false when absent.
  template <class Fn>
  bool read(const BlockKey& key, Fn&& fn) const {
    for (;;) {
      const auto found = map_.retrieve(key);
      if (!found) return false;
      const Record& rec = record(found->value);
      std::shared_lock lock(stripe(found->value));
      if (rec.live && rec.key == key) {
        fn(rec.block);
        return true;
      }
    }
  }

  /// Applies `fn(Block&)` under the exclusive lock; false when absent.
  template <class Fn>
  bool modify(const BlockKey& key, Fn&& fn) {
    for (;;) {
      const auto found = map_.retrieve(key);
      if (!found) return false;
      Record& rec = record(found->value);
      std::unique_lock lock(stripe(found->value));
      if (rec.live && rec.key == key) {
        fn(rec.block);
        return true;
      }
    }
  }

  std::optional<Block> get(const BlockKey& key) const {
    std::optional<Block> out;
    read(key, [&](const Block& b) { out = b; });
    return out;
  }

  bool erase(const BlockKey& key) {
    const std::optional<std::uint32_t> slot = map_.remove(key);
    if (!slot) return false;
    {
      std::unique_lock lock(stripe(*slot));
      record(*slot).live = false;
    }
    free_slots_.push(*slot);
    return true;
  }

  bool contains(const BlockKey& key) const { return map_.contains(key); }
  std::size_t size() const { return map_.size(); }
  std::vector<BlockKey> keys() const { return map_.snapshot_keys(); }

  /// Visits every block present for the whole scan, under its shared lock.
  template <class Fn>
  void for_each(Fn&& fn) const {
    map_.for_each_occupied([&](EntryIndex, const BlockKey& key, const std::uint32_t& slot) {
      const Record& rec = record(slot);
      std::shared_lock lock(stripe(slot));
      if (rec.live && rec.key == key) fn(key, rec.block);
    });
  }

  const ConcurrentHashMap<std::uint32_t>& index() const { return map_; }

 private:
  static constexpr std::uint32_t kChunkSlots = 256;
  static constexpr std::size_t kStripes = 4096;

  struct Record {
    Block block{};
    BlockKey key{};
    bool live = false;
  };
  struct Chunk {
    std::array<Record, kChunkSlots> records;
  };

  std::uint32_t chunk_count() const { return (pool_capacity_ + kChunkSlots - 1) / kChunkSlots; }

  Record& record(std::uint32_t slot) const {
    std::atomic<Chunk*>& cell = chunks_[slot / kChunkSlots];
    Chunk* chunk = cell.load(std::memory_order_acquire);
    if (chunk == nullptr) {
      auto fresh = std::make_unique<Chunk>();
      if (cell.compare_exchange_strong(chunk, fresh.get(), std::memory_order_acq_rel)) {
        chunk = fresh.release();
      }
    }
    return chunk->records[slot % kChunkSlots];
  }

  std::shared_mutex& stripe(std::uint32_t slot) const { return stripes_[slot % kStripes]; }

  ConcurrentHashMap<std::uint32_t> map_;
  std::uint32_t pool_capacity_;
  std::unique_ptr<std::atomic<Chunk*>[]> chunks_;
  FreeListStack free_slots_;
  mutable std::array<std::shared_mutex, kStripes> stripes_;
};

}  // namespace voxstream
