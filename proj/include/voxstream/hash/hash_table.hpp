#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <thread>
#include <type_traits>
#include <vector>

#include "voxstream/block_key.hpp"
#include "voxstream/hash/free_list_stack.hpp"
#include "voxstream/hash/spatial_hash.hpp"

namespace voxstream {

using EntryIndex = std::uint32_t;

enum class HashStatus : std::uint8_t {
  kOk,
  kCapacityExhausted,  // collision list needed a fresh excess entry and the free list was empty
  kFailed,             // single-attempt mode only: lock contention or concurrent change
};

struct InsertResult {
  HashStatus status = HashStatus::kOk;
  EntryIndex position = 0;
  bool inserted = false;  // false when the key was already present

  bool ok() const { return status == HashStatus::kOk; }
};

struct NoPayload {
  friend constexpr bool operator==(NoPayload, NoPayload) { return true; }
};

/// Fixed-capacity concurrent hash table keyed by BlockKey.
///
/// Layout: `bucket_count` bucket entries followed by `excess_capacity` entries
/// that form per-bucket collision lists. Free excess entries live on a
/// FreeListStack. All operations may run concurrently from any thread.
///
/// Invariant: an occupied entry never moves and a collision link is never
/// severed while a reader may still be traversing it. Removing a bucket entry
/// only clears its occupancy (the list hanging off it stays in place); removing
/// a list entry re-links its predecessor but keeps the removed entry's own link
/// until the slot is handed out again by an insertion.
///
/// Every insertion into a chain holds the chain's bucket lock and repeats the
/// lookup under it, which is what makes keys unique. Lookups validate each
/// entry with a per-entry sequence word and re-walk a chain whose unlink epoch
/// changed while they were on it, so a slot recycled mid-walk cannot hide a
/// present key.
///
/// `Payload` must be a lock-free atomic-compatible value type (the block
/// stores use a pool slot index); `NoPayload` gives the set variant.
template <class Payload>
class BasicHashTable {
 public:
  static constexpr bool kHasPayload = !std::is_same_v<Payload, NoPayload>;
  static_assert(!kHasPayload || std::atomic<Payload>::is_always_lock_free);

  struct Found {
    EntryIndex position;
    Payload value;
  };

  explicit BasicHashTable(HashConfig cfg)
      : cfg_((cfg.validate(), cfg)),
        total_(cfg.bucket_count + cfg.excess_capacity),
        entries_(new Entry[total_]),
        occupancy_(new std::atomic<std::uint64_t>[(total_ + 63) / 64]),
        free_list_(cfg.excess_capacity, cfg.bucket_count, /*filled=*/true) {
    for (std::uint32_t w = 0; w < (total_ + 63) / 64; ++w) occupancy_[w].store(0, std::memory_order_relaxed);
    if constexpr (kHasPayload) payloads_.reset(new std::atomic<Payload>[total_]);
  }

  BasicHashTable(const BasicHashTable&) = delete;
  BasicHashTable& operator=(const BasicHashTable&) = delete;

  const HashConfig& config() const { return cfg_; }
  std::uint32_t capacity() const { return total_; }

  /// Approximate number of keys (exact at quiescence).
  std::size_t size() const {
    const auto s = size_.load(std::memory_order_relaxed);
    return s < 0 ? 0 : static_cast<std::size_t>(s);
  }
  bool empty() const { return size() == 0; }

  /// Read-only lookup. A key present for the whole call is always found.
  std::optional<Found> retrieve(const BlockKey& key) const {
    auto loc = locate(key, bucket_of(key));
    if (!loc) return std::nullopt;
    return Found{loc->position, loc->value};
  }

  bool contains(const BlockKey& key) const { return retrieve(key).has_value(); }

  /// Inserts `key` unless present; never overwrites an existing payload.
  /// Loops over a non-blocking attempt until the key is present or the free
  /// list runs dry (capacity exhausted, structure unchanged).
  InsertResult insert(const BlockKey& key, Payload value = Payload{}) {
    for (;;) {
      InsertResult r = try_insert(key, value);
      if (r.status != HashStatus::kFailed) return r;
      std::this_thread::yield();
    }
  }

  /// Single non-blocking attempt, allowed to fail (kFailed) on lock contention
  /// or concurrent modification. Exposed to reproduce failure-permitting
  /// voxel-hashing insertion for comparison.
  InsertResult insert_once(const BlockKey& key, Payload value = Payload{}) { return try_insert(key, value); }

  /// Test hook run by inserters right after taking the bucket lock. A short
  /// sleep there lets other threads arrive while the lock is held, which emulates
  /// lockstep contention on machines with few cores. Set before concurrent use.
  void set_lock_hook(void (*hook)()) { lock_hook_ = hook; }

  /// Removes `key`; returns its payload when this call removed it.
  std::optional<Payload> remove(const BlockKey& key) {
    for (;;) {
      Attempt a = try_remove(key);
      if (a.outcome == Outcome::kDone) return a.value;
      if (a.outcome == Outcome::kAbsent) return std::nullopt;
      std::this_thread::yield();
    }
  }

  bool erase(const BlockKey& key) { return remove(key).has_value(); }

  /// Removes and returns up to `max_n` keys, scanning from a rotating
  /// pseudo-random start. Concurrent extractors never return the same key.
  std::vector<BlockKey> extract_batch(std::size_t max_n) {
    return extract_matching(max_n, [](const BlockKey&) { return true; });
  }

  template <class Pred>
  std::vector<BlockKey> extract_matching(std::size_t max_n, Pred&& pred) {
    std::vector<BlockKey> out;
    if (max_n == 0 || empty()) return out;
    out.reserve(std::min<std::size_t>(max_n, size()));
    const std::uint32_t words = (total_ + 63) / 64;
    const std::uint32_t start_word = static_cast<std::uint32_t>(next_scan_seed() % words);
    for (std::uint32_t w = 0; w < words && out.size() < max_n; ++w) {
      const std::uint32_t word = (start_word + w) % words;
      std::uint64_t bits = occupancy_[word].load(std::memory_order_acquire);
      while (bits != 0 && out.size() < max_n) {
        const int bit = std::countr_zero(bits);
        bits &= bits - 1;
        const EntryIndex idx = word * 64 + static_cast<EntryIndex>(bit);
        const Snapshot s = read_entry(idx);
        if (!s.consistent || !s.occupied || !pred(s.key)) continue;
        if (remove(s.key)) out.push_back(s.key);
      }
    }
    return out;
  }

  /// Keys present for the whole scan are reported exactly once; keys that are
  /// inserted or removed during the scan may or may not appear.
  std::vector<BlockKey> snapshot_keys() const {
    std::vector<BlockKey> out;
    out.reserve(size());
    for_each_occupied([&](EntryIndex, const BlockKey& k, const Payload&) { out.push_back(k); });
    return out;
  }

  /// Visits occupied entries (same consistency as snapshot_keys).
  template <class Fn>
  void for_each_occupied(Fn&& fn) const {
    const std::uint32_t words = (total_ + 63) / 64;
    for (std::uint32_t word = 0; word < words; ++word) {
      std::uint64_t bits = occupancy_[word].load(std::memory_order_acquire);
      while (bits != 0) {
        const int bit = std::countr_zero(bits);
        bits &= bits - 1;
        const EntryIndex idx = word * 64 + static_cast<EntryIndex>(bit);
        const Snapshot s = read_entry(idx);
        if (s.consistent && s.occupied) fn(idx, s.key, s.value);
      }
    }
  }

  // --- introspection for tests and invariant checks (quiescent use only) ---

  std::uint32_t bucket_of(const BlockKey& key) const { return hash_key(key, cfg_.bucket_count); }

  /// Number of entries on bucket `b`'s chain, counting the bucket itself.
  std::size_t chain_length(std::uint32_t b) const {
    std::size_t len = 1;
    for (EntryIndex e = entries_[b].next.load(std::memory_order_acquire); e != 0;
         e = entries_[e].next.load(std::memory_order_acquire)) {
      ++len;
    }
    return len;
  }

  /// Excess entries reachable from any bucket.
  std::size_t reachable_excess() const {
    std::size_t n = 0;
    for (std::uint32_t b = 0; b < cfg_.bucket_count; ++b) n += chain_length(b) - 1;
    return n;
  }

  std::uint32_t free_excess() const { return free_list_.size(); }

 private:
  struct Entry {
    std::atomic<std::uint32_t> lock{0};
    // bit 0: write in progress; bit 1: occupied; bits 2..: modification counter
    std::atomic<std::uint32_t> state{0};
    std::atomic<EntryIndex> next{0};  // 0 = end of list; otherwise an excess index
    std::atomic<std::uint32_t> unlink_epoch{0};  // used on bucket entries only
    std::atomic<std::int32_t> x{0};
    std::atomic<std::int32_t> y{0};
    std::atomic<std::int32_t> z{0};
  };

  static constexpr std::uint32_t kWriting = 1u;
  static constexpr std::uint32_t kOccupied = 2u;
  static constexpr EntryIndex kNoEntry = 0xFFFFFFFFu;

  struct Snapshot {
    bool consistent = false;
    bool occupied = false;
    BlockKey key;
    Payload value{};
  };

  struct Location {
    EntryIndex position;
    EntryIndex predecessor;  // kNoEntry when `position` is the bucket
    Payload value;
  };

  enum class Outcome { kDone, kRetry, kAbsent };
  struct Attempt {
    Outcome outcome;
    std::optional<Payload> value;
  };

  bool try_lock(EntryIndex i) {
    std::uint32_t expected = 0;
    return entries_[i].lock.compare_exchange_strong(expected, 1, std::memory_order_acquire,
                                                    std::memory_order_relaxed);
  }
  void unlock(EntryIndex i) { entries_[i].lock.store(0, std::memory_order_release); }

  Snapshot read_entry(EntryIndex i) const {
    const Entry& e = entries_[i];
    Snapshot s;
    const std::uint32_t before = e.state.load(std::memory_order_acquire);
    if (before & kWriting) return s;
    s.key = {e.x.load(std::memory_order_relaxed), e.y.load(std::memory_order_relaxed),
             e.z.load(std::memory_order_relaxed)};
    if constexpr (kHasPayload) s.value = payloads_[i].load(std::memory_order_relaxed);
    std::atomic_thread_fence(std::memory_order_acquire);
    const std::uint32_t after = e.state.load(std::memory_order_relaxed);
    s.consistent = before == after;
    s.occupied = (before & kOccupied) != 0;
    return s;
  }

  // Caller owns the entry: holds its lock, or popped it from the free list.
  void write_entry(EntryIndex i, const BlockKey& key, const Payload& value, bool reset_link) {
    Entry& e = entries_[i];
    const std::uint32_t s = e.state.load(std::memory_order_relaxed);
    e.state.store(s | kWriting, std::memory_order_relaxed);
    std::atomic_thread_fence(std::memory_order_release);
    e.x.store(key.x, std::memory_order_relaxed);
    e.y.store(key.y, std::memory_order_relaxed);
    e.z.store(key.z, std::memory_order_relaxed);
    if constexpr (kHasPayload) payloads_[i].store(value, std::memory_order_relaxed);
    if (reset_link) e.next.store(0, std::memory_order_release);  // stale link from a past removal
    occupancy_[i / 64].fetch_or(std::uint64_t{1} << (i % 64), std::memory_order_release);
    e.state.store(((s >> 2) + 1) << 2 | kOccupied, std::memory_order_release);
    size_.fetch_add(1, std::memory_order_relaxed);
  }

  void clear_entry(EntryIndex i) {
    Entry& e = entries_[i];
    const std::uint32_t s = e.state.load(std::memory_order_relaxed);
    e.state.store(s | kWriting, std::memory_order_relaxed);
    std::atomic_thread_fence(std::memory_order_release);
    if constexpr (kHasPayload) payloads_[i].store(Payload{}, std::memory_order_relaxed);
    e.state.store(((s >> 2) + 1) << 2, std::memory_order_release);
    occupancy_[i / 64].fetch_and(~(std::uint64_t{1} << (i % 64)), std::memory_order_release);
    size_.fetch_sub(1, std::memory_order_relaxed);
  }

  std::optional<Location> locate(const BlockKey& key, std::uint32_t bucket) const {
    for (;;) {
      const std::uint32_t epoch = entries_[bucket].unlink_epoch.load(std::memory_order_acquire);
      EntryIndex pred = kNoEntry;
      EntryIndex cur = bucket;
      std::uint32_t steps = 0;
      for (;;) {
        const Snapshot s = read_entry(cur);
        if (s.consistent && s.occupied && s.key == key) return Location{cur, pred, s.value};
        const EntryIndex nxt = entries_[cur].next.load(std::memory_order_acquire);
        if (nxt == 0 || ++steps > total_) break;
        pred = cur;
        cur = nxt;
      }
      std::atomic_thread_fence(std::memory_order_acquire);
      if (entries_[bucket].unlink_epoch.load(std::memory_order_relaxed) == epoch) return std::nullopt;
    }
  }

  InsertResult try_insert(const BlockKey& key, const Payload& value) {
    const std::uint32_t b = bucket_of(key);
    if (auto loc = locate(key, b)) return {HashStatus::kOk, loc->position, false};
    if (!try_lock(b)) return {HashStatus::kFailed, 0, false};
    if (lock_hook_) lock_hook_();

    // Inserters on this chain are now serialized; repeat the lookup under the lock.
    const std::uint32_t epoch = entries_[b].unlink_epoch.load(std::memory_order_acquire);
    if (auto loc = locate(key, b)) {
      unlock(b);
      return {HashStatus::kOk, loc->position, false};
    }
    if ((entries_[b].state.load(std::memory_order_acquire) & kOccupied) == 0) {
      write_entry(b, key, value, /*reset_link=*/false);
      unlock(b);
      return {HashStatus::kOk, b, true};
    }

    EntryIndex tail = b;
    for (std::uint32_t steps = 0;; ++steps) {
      const EntryIndex nxt = entries_[tail].next.load(std::memory_order_acquire);
      if (nxt == 0) break;
      if (steps > total_) {
        unlock(b);
        return {HashStatus::kFailed, 0, false};
      }
      tail = nxt;
    }
    if (tail != b && !try_lock(tail)) {
      unlock(b);
      return {HashStatus::kFailed, 0, false};
    }
    const auto release = [&] {
      if (tail != b) unlock(tail);
      unlock(b);
    };
    const bool tail_live = tail == b || (entries_[tail].state.load(std::memory_order_acquire) & kOccupied) != 0;
    if (!tail_live || entries_[tail].next.load(std::memory_order_acquire) != 0 ||
        entries_[b].unlink_epoch.load(std::memory_order_acquire) != epoch) {
      release();
      return {HashStatus::kFailed, 0, false};
    }
    const std::optional<std::uint32_t> slot = free_list_.pop();
    if (!slot) {
      release();
      return {HashStatus::kCapacityExhausted, 0, false};
    }
    write_entry(*slot, key, value, /*reset_link=*/true);
    entries_[tail].next.store(*slot, std::memory_order_release);
    release();
    return {HashStatus::kOk, *slot, true};
  }

  Attempt try_remove(const BlockKey& key) {
    const std::uint32_t b = bucket_of(key);
    const std::optional<Location> loc = locate(key, b);
    if (!loc) return {Outcome::kAbsent, std::nullopt};

    const auto holds_key = [&](EntryIndex i) {
      const Entry& e = entries_[i];
      return (e.state.load(std::memory_order_acquire) & kOccupied) != 0 &&
             BlockKey{e.x.load(std::memory_order_relaxed), e.y.load(std::memory_order_relaxed),
                      e.z.load(std::memory_order_relaxed)} == key;
    };
    const auto take_payload = [&](EntryIndex i) -> Payload {
      if constexpr (kHasPayload) return payloads_[i].load(std::memory_order_relaxed);
      return Payload{};
    };

    if (loc->predecessor == kNoEntry) {
      if (!try_lock(b)) return {Outcome::kRetry, std::nullopt};
      if (!holds_key(b)) {
        unlock(b);
        return {Outcome::kRetry, std::nullopt};
      }
      Payload v = take_payload(b);
      clear_entry(b);  // link to the collision list stays
      unlock(b);
      return {Outcome::kDone, v};
    }

    const EntryIndex pred = loc->predecessor;
    const EntryIndex cur = loc->position;
    if (!try_lock(pred)) return {Outcome::kRetry, std::nullopt};
    if (!try_lock(cur)) {
      unlock(pred);
      return {Outcome::kRetry, std::nullopt};
    }
    const bool pred_live = pred == b || (entries_[pred].state.load(std::memory_order_acquire) & kOccupied) != 0;
    if (!pred_live || entries_[pred].next.load(std::memory_order_acquire) != cur || !holds_key(cur)) {
      unlock(cur);
      unlock(pred);
      return {Outcome::kRetry, std::nullopt};
    }
    entries_[pred].next.store(entries_[cur].next.load(std::memory_order_acquire), std::memory_order_release);
    Payload v = take_payload(cur);
    clear_entry(cur);  // its own link is left for readers still walking through it
    entries_[b].unlink_epoch.fetch_add(1, std::memory_order_acq_rel);
    unlock(cur);
    unlock(pred);
    free_list_.push(cur);
    return {Outcome::kDone, v};
  }

  std::uint64_t next_scan_seed() {
    std::uint64_t z = scan_seed_.fetch_add(0x9E3779B97F4A7C15ull, std::memory_order_relaxed);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  HashConfig cfg_;
  std::uint32_t total_;
  std::unique_ptr<Entry[]> entries_;
  std::unique_ptr<std::atomic<Payload>[]> payloads_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> occupancy_;
  FreeListStack free_list_;
  void (*lock_hook_)() = nullptr;
  std::atomic<std::int64_t> size_{0};
  std::atomic<std::uint64_t> scan_seed_{0x243F6A8885A308D3ull};
};

template <class Payload>
using ConcurrentHashMap = BasicHashTable<Payload>;

using ConcurrentHashSet = BasicHashTable<NoPayload>;

}  // namespace voxstream
