#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <random>
#include <set>
#include <thread>
#include <unordered_set>
#include <vector>

#include "voxstream/hash/free_list_stack.hpp"
#include "voxstream/hash/hash_table.hpp"
#include "voxstream/hash/spatial_hash.hpp"

namespace voxstream {
namespace {

using KeySet = std::set<BlockKey>;

KeySet as_set(const std::vector<BlockKey>& v) { return KeySet(v.begin(), v.end()); }

// Keys that all land in bucket `b` of an n-bucket table, found by brute force.
std::vector<BlockKey> colliding_keys(std::uint32_t n, std::uint32_t b, std::size_t count) {
  std::vector<BlockKey> out;
  for (std::int32_t x = -200; x <= 200 && out.size() < count; ++x) {
    for (std::int32_t y = -50; y <= 50 && out.size() < count; ++y) {
      BlockKey k{x, y, 7};
      if (hash_key(k, n) == b) out.push_back(k);
    }
  }
  return out;
}

TEST(SpatialHash, KnownValues) {
  EXPECT_EQ(hash_key({0, 0, 0}, 1u << 20), 0u);
  EXPECT_EQ(hash_key({1, 0, 0}, 1u << 30), 73856093u);
  // Values computed with exact integer arithmetic (32-bit wrap, signed XOR, floor modulo).
  EXPECT_EQ(hash_key({1, 2, 3}, 1u << 20), 363058u);
  EXPECT_EQ(hash_key({-1, -2, -3}, 1u << 20), 685518u);
  EXPECT_EQ(hash_key({-1, 0, 0}, 1000), 907u);
  EXPECT_EQ(hash_key({-7, 3, -2}, 1000), 288u);
  EXPECT_EQ(hash_key({5, -9, 11}, 97), 56u);
}

TEST(SpatialHash, AlwaysInRange) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<std::int32_t> d(-100000, 100000);
  for (std::uint32_t n : {1u, 2u, 97u, 1000u, 1u << 20}) {
    for (int i = 0; i < 2000; ++i) EXPECT_LT(hash_key({d(rng), d(rng), d(rng)}, n), n);
  }
}

TEST(FreeListStack, PushPop) {
  FreeListStack s(16);
  EXPECT_FALSE(s.pop().has_value());
  s.push(7);
  EXPECT_EQ(s.pop(), 7u);
  EXPECT_FALSE(s.pop().has_value());
}

TEST(FreeListStack, LifoUnderQuiescence) {
  FreeListStack s(8, 100);
  s.push(101);
  s.push(105);
  s.push(103);
  EXPECT_EQ(s.pop(), 103u);
  EXPECT_EQ(s.pop(), 105u);
  EXPECT_EQ(s.pop(), 101u);
}

TEST(FreeListStack, FreshFullStackDrains) {
  constexpr std::uint32_t kCap = 33;
  FreeListStack s(kCap, 10, true);
  std::vector<std::uint32_t> got;
  for (std::uint32_t i = 0; i < kCap + 1; ++i) {
    auto v = s.pop();
    if (v) got.push_back(*v);
  }
  ASSERT_EQ(got.size(), kCap);
  for (std::uint32_t i = 0; i < kCap; ++i) EXPECT_EQ(got[i], 10 + i);
  EXPECT_EQ(s.size(), 0u);
}

TEST(FreeListStack, ConcurrentPushThenPopPreservesMultiset) {
  constexpr std::uint32_t kN = 40000;
  constexpr int kThreads = 8;
  FreeListStack s(kN);
  std::vector<std::thread> ts;
  for (int t = 0; t < kThreads; ++t) {
    ts.emplace_back([&, t] {
      for (std::uint32_t i = t; i < kN; i += kThreads) s.push(i);
    });
  }
  for (auto& t : ts) t.join();
  ts.clear();
  std::vector<std::vector<std::uint32_t>> popped(kThreads);
  for (int t = 0; t < kThreads; ++t) {
    ts.emplace_back([&, t] {
      while (auto v = s.pop()) popped[t].push_back(*v);
    });
  }
  for (auto& t : ts) t.join();
  std::vector<std::uint32_t> all;
  for (auto& p : popped) all.insert(all.end(), p.begin(), p.end());
  std::sort(all.begin(), all.end());
  ASSERT_EQ(all.size(), kN);
  for (std::uint32_t i = 0; i < kN; ++i) ASSERT_EQ(all[i], i);
}

TEST(FreeListStack, MixedConcurrentPushPopNeverDuplicates) {
  constexpr std::uint32_t kN = 256;
  FreeListStack s(kN, 0, true);
  std::vector<std::thread> ts;
  std::atomic<bool> failed{false};
  std::vector<std::atomic<int>> owners(kN);
  for (auto& o : owners) o.store(0);
  for (int t = 0; t < 8; ++t) {
    ts.emplace_back([&] {
      for (int i = 0; i < 20000; ++i) {
        if (auto v = s.pop()) {
          if (owners[*v].fetch_add(1) != 0) failed = true;
          owners[*v].fetch_sub(1);
          s.push(*v);
        }
      }
    });
  }
  for (auto& t : ts) t.join();
  EXPECT_FALSE(failed.load());
  EXPECT_EQ(s.size(), kN);
}

TEST(HashTable, EmptyRetrieveAndRemove) {
  ConcurrentHashMap<std::uint32_t> m({64, 64});
  EXPECT_FALSE(m.retrieve({1, 2, 3}).has_value());
  EXPECT_FALSE(m.remove({1, 2, 3}).has_value());
  EXPECT_TRUE(m.snapshot_keys().empty());
}

TEST(HashTable, InsertRetrieveRemove) {
  ConcurrentHashMap<std::uint32_t> m({64, 64});
  const auto r = m.insert({1, 2, 3}, 42);
  ASSERT_TRUE(r.ok());
  EXPECT_TRUE(r.inserted);
  const auto f = m.retrieve({1, 2, 3});
  ASSERT_TRUE(f.has_value());
  EXPECT_EQ(f->value, 42u);
  EXPECT_EQ(f->position, r.position);

  const auto again = m.insert({1, 2, 3}, 99);
  EXPECT_FALSE(again.inserted);
  EXPECT_EQ(again.position, r.position);
  EXPECT_EQ(m.retrieve({1, 2, 3})->value, 42u) << "existing payload must not be overwritten";

  EXPECT_EQ(m.remove({1, 2, 3}), 42u);
  EXPECT_FALSE(m.retrieve({1, 2, 3}).has_value());
  EXPECT_EQ(m.size(), 0u);
}

TEST(HashTable, CollidingAbsentKeyNotFound) {
  constexpr std::uint32_t n = 16;
  const auto keys = colliding_keys(n, 5, 2);
  ASSERT_EQ(keys.size(), 2u);
  ConcurrentHashSet s({n, 16});
  s.insert(keys[0]);
  EXPECT_TRUE(s.contains(keys[0]));
  EXPECT_FALSE(s.contains(keys[1]));
}

TEST(HashTable, CollisionListHoldsAllKeys) {
  constexpr std::uint32_t n = 8;
  const auto keys = colliding_keys(n, 3, 20);
  ASSERT_EQ(keys.size(), 20u);
  ConcurrentHashSet s({n, 32});
  for (const auto& k : keys) ASSERT_TRUE(s.insert(k).inserted);
  for (const auto& k : keys) EXPECT_TRUE(s.contains(k));
  EXPECT_EQ(s.chain_length(3), 20u);
  EXPECT_EQ(s.reachable_excess(), 19u);
  EXPECT_EQ(s.free_excess(), 32u - 19u);
}

TEST(HashTable, BucketRemovalKeepsCollisionList) {
  constexpr std::uint32_t n = 8;
  const auto keys = colliding_keys(n, 1, 4);
  ConcurrentHashSet s({n, 8});
  for (const auto& k : keys) s.insert(k);
  ASSERT_TRUE(s.erase(keys[0]));  // lives in the bucket entry
  for (std::size_t i = 1; i < keys.size(); ++i) EXPECT_TRUE(s.contains(keys[i]));
  EXPECT_EQ(s.chain_length(1), 4u) << "the list is not pulled into the bucket";
  // The emptied bucket is reused by the next insertion into the chain.
  s.insert(keys[0]);
  EXPECT_EQ(s.chain_length(1), 4u);
  EXPECT_EQ(s.free_excess(), 8u - 3u);
}

TEST(HashTable, ExcessRemovalRecyclesEntry) {
  constexpr std::uint32_t n = 4;
  const auto keys = colliding_keys(n, 2, 3);
  ConcurrentHashSet s({n, 4});
  for (const auto& k : keys) s.insert(k);
  EXPECT_EQ(s.free_excess(), 2u);
  ASSERT_TRUE(s.erase(keys[1]));
  EXPECT_EQ(s.free_excess(), 3u);
  EXPECT_TRUE(s.contains(keys[0]));
  EXPECT_TRUE(s.contains(keys[2]));
  EXPECT_EQ(s.chain_length(2), 2u);
}

TEST(HashTable, CapacityExhaustedLeavesStructureUnchanged) {
  constexpr std::uint32_t n = 2;
  const auto keys = colliding_keys(n, 0, 4);
  ConcurrentHashSet s({n, 2});
  for (int i = 0; i < 3; ++i) ASSERT_TRUE(s.insert(keys[i]).ok());
  const auto r = s.insert(keys[3]);
  EXPECT_EQ(r.status, HashStatus::kCapacityExhausted);
  EXPECT_FALSE(s.contains(keys[3]));
  EXPECT_EQ(as_set(s.snapshot_keys()), KeySet(keys.begin(), keys.begin() + 3));
}

TEST(HashTable, ExtractBatchSmallSet) {
  ConcurrentHashSet s({64, 64});
  KeySet expect;
  for (int i = 0; i < 5; ++i) {
    s.insert({i, -i, 2 * i});
    expect.insert({i, -i, 2 * i});
  }
  EXPECT_EQ(as_set(s.extract_batch(10)), expect);
  EXPECT_TRUE(s.empty());
  EXPECT_TRUE(s.extract_batch(10).empty());
}

TEST(HashTable, ExtractMatching) {
  ConcurrentHashSet s({64, 64});
  s.insert({-1, 0, 0});
  s.insert({1, 0, 0});
  EXPECT_TRUE(s.extract_matching(10, [](const BlockKey&) { return false; }).empty());
  EXPECT_EQ(s.size(), 2u);
  const auto got = s.extract_matching(10, [](const BlockKey& k) { return k.x >= 0; });
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0], (BlockKey{1, 0, 0}));
  EXPECT_TRUE(s.contains({-1, 0, 0}));
}

TEST(HashTable, ConcurrentExtractorsAreDisjoint) {
  for (int trial = 0; trial < 10; ++trial) {
    ConcurrentHashSet s({256, 1024});
    for (int i = 0; i < 1000; ++i) s.insert({i % 10, i / 10, trial});
    std::vector<BlockKey> a, b;
    std::thread ta([&] { a = s.extract_batch(600); });
    std::thread tb([&] { b = s.extract_batch(600); });
    ta.join();
    tb.join();
    KeySet sa = as_set(a), sb = as_set(b);
    ASSERT_EQ(sa.size(), a.size());
    ASSERT_EQ(sb.size(), b.size());
    for (const auto& k : sa) ASSERT_EQ(sb.count(k), 0u);
    EXPECT_EQ(a.size() + b.size(), 1000u);
  }
}

TEST(HashTable, SameKeyConcurrentInsertYieldsOneEntry) {
  for (int threads : {2, 8, 64}) {
    for (int trial = 0; trial < 20; ++trial) {
      ConcurrentHashSet s({4, 128});
      // Pre-fill the bucket chains so the contended key can land in either region.
      for (int i = 0; i < trial % 5; ++i) s.insert({100 + i, 0, 0});
      const BlockKey key{trial, 1, 2};
      std::vector<EntryIndex> pos(threads);
      std::vector<std::thread> ts;
      std::atomic<bool> go{false};
      for (int t = 0; t < threads; ++t) {
        ts.emplace_back([&, t] {
          while (!go.load()) std::this_thread::yield();
          pos[t] = s.insert(key).position;
        });
      }
      go = true;
      for (auto& t : ts) t.join();
      const auto keys = s.snapshot_keys();
      EXPECT_EQ(std::count(keys.begin(), keys.end(), key), 1);
      for (int t = 1; t < threads; ++t) EXPECT_EQ(pos[t], pos[0]);
    }
  }
}

TEST(HashTable, ConcurrentCollidingInsertsMatchOracle) {
  constexpr std::uint32_t n = 4;
  ConcurrentHashSet s({n, 4096});
  std::vector<std::thread> ts;
  for (int t = 0; t < 8; ++t) {
    ts.emplace_back([&, t] {
      for (int i = 0; i < 400; ++i) s.insert({t, i, 0});
    });
  }
  for (auto& t : ts) t.join();
  KeySet oracle;
  for (int t = 0; t < 8; ++t)
    for (int i = 0; i < 400; ++i) oracle.insert({t, i, 0});
  const auto keys = s.snapshot_keys();
  EXPECT_EQ(keys.size(), oracle.size());
  EXPECT_EQ(as_set(keys), oracle);
  EXPECT_EQ(s.reachable_excess() + s.free_excess(), 4096u);
}

TEST(HashTable, InsertAndRemoveDisjointSetsMatchSetAlgebra) {
  constexpr std::uint32_t n = 64;
  ConcurrentHashSet s({n, 8192});
  KeySet initial, removed, added;
  for (int i = 0; i < 2000; ++i) {
    s.insert({i, 0, 1});
    initial.insert({i, 0, 1});
    if (i % 2 == 0) removed.insert({i, 0, 1});
  }
  for (int i = 0; i < 2000; ++i) added.insert({i, 1, 1});
  std::vector<BlockKey> rem(removed.begin(), removed.end()), add(added.begin(), added.end());
  std::vector<std::thread> ts;
  for (int t = 0; t < 8; ++t) {
    ts.emplace_back([&, t] {
      for (std::size_t i = t; i < rem.size(); i += 8) EXPECT_TRUE(s.erase(rem[i]));
      for (std::size_t i = t; i < add.size(); i += 8) EXPECT_TRUE(s.insert(add[i]).inserted);
    });
  }
  for (auto& t : ts) t.join();
  KeySet expect;
  for (const auto& k : initial)
    if (!removed.count(k)) expect.insert(k);
  expect.insert(added.begin(), added.end());
  EXPECT_EQ(as_set(s.snapshot_keys()), expect);
  EXPECT_EQ(s.size(), expect.size());
  EXPECT_EQ(s.reachable_excess() + s.free_excess(), 8192u);
}

TEST(HashTable, PinnedKeysStayVisibleDuringChurn) {
  constexpr std::uint32_t n = 8;
  ConcurrentHashSet s({n, 4096});
  std::vector<BlockKey> pinned;
  for (int i = 0; i < 64; ++i) {
    pinned.push_back({i, 99, 99});
    s.insert(pinned.back());
  }
  std::atomic<bool> stop{false};
  std::atomic<long> misses{0};
  std::thread reader([&] {
    while (!stop.load()) {
      for (const auto& k : pinned) {
        if (!s.contains(k)) misses.fetch_add(1);
      }
    }
  });
  std::vector<std::thread> writers;
  for (int t = 0; t < 4; ++t) {
    writers.emplace_back([&, t] {
      std::mt19937 rng(t);
      for (int i = 0; i < 20000; ++i) {
        BlockKey k{static_cast<std::int32_t>(rng() % 512), t, 0};
        if (rng() & 1) {
          s.insert(k);
        } else {
          s.erase(k);
        }
      }
    });
  }
  for (auto& w : writers) w.join();
  stop = true;
  reader.join();
  EXPECT_EQ(misses.load(), 0);
}

TEST(HashTable, RandomSequenceMatchesSequentialOracle) {
  std::mt19937 rng(11);
  ConcurrentHashMap<std::uint32_t> m({32, 2048});
  std::map<BlockKey, std::uint32_t> oracle;
  for (int i = 0; i < 100000; ++i) {
    BlockKey k{static_cast<std::int32_t>(rng() % 40) - 20, static_cast<std::int32_t>(rng() % 40) - 20, 0};
    switch (rng() % 3) {
      case 0: {
        const std::uint32_t v = rng();
        const auto r = m.insert(k, v);
        ASSERT_TRUE(r.ok());
        ASSERT_EQ(r.inserted, oracle.emplace(k, v).second);
        break;
      }
      case 1: {
        const auto got = m.remove(k);
        auto it = oracle.find(k);
        ASSERT_EQ(got.has_value(), it != oracle.end());
        if (got) {
          ASSERT_EQ(*got, it->second);
          oracle.erase(it);
        }
        break;
      }
      default: {
        const auto f = m.retrieve(k);
        auto it = oracle.find(k);
        ASSERT_EQ(f.has_value(), it != oracle.end());
        if (f) ASSERT_EQ(f->value, it->second);
      }
    }
  }
  KeySet keys;
  for (auto& [k, v] : oracle) keys.insert(k);
  EXPECT_EQ(as_set(m.snapshot_keys()), keys);
  EXPECT_EQ(m.reachable_excess() + m.free_excess(), 2048u);
}

TEST(HashTable, SingleAttemptInsertLosesKeysUnderContention) {
  // A short sleep under the bucket lock makes inserters collide on any core count.
  const auto nap = [] { std::this_thread::sleep_for(std::chrono::microseconds(1)); };
  std::vector<BlockKey> keys;
  for (int i = 0; i < 1500; ++i) keys.push_back({i, 3, 1});
  std::shuffle(keys.begin(), keys.end(), std::mt19937(5));
  auto run = [&](bool retry) {
    ConcurrentHashSet s({8, 4096});
    s.set_lock_hook(nap);
    std::vector<std::thread> ts;
    for (int t = 0; t < 8; ++t) {
      ts.emplace_back([&, t] {
        for (std::size_t i = t; i < keys.size(); i += 8) retry ? s.insert(keys[i]) : s.insert_once(keys[i]);
      });
    }
    for (auto& t : ts) t.join();
    return s.size();
  };
  EXPECT_EQ(run(true), keys.size());
  EXPECT_LT(run(false), keys.size());
}

}  // namespace
}  // namespace voxstream
