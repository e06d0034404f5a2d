#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace voxstream {

/// Number of worker threads used by data-parallel loops (at least 1).
inline unsigned default_parallelism() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Splits [0, n) into contiguous chunks and runs fn(begin, end) for each,
/// one chunk per thread. Runs inline when a single thread suffices.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, unsigned threads = default_parallelism()) {
  if (n == 0) return;
  const std::size_t t = std::min<std::size_t>(std::max(1u, threads), n);
  if (t == 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(t - 1);
  const std::size_t chunk = (n + t - 1) / t;
  for (std::size_t i = 1; i < t; ++i) {
    const std::size_t b = i * chunk;
    const std::size_t e = std::min(n, b + chunk);
    if (b < e) pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(std::size_t{0}, std::min(n, chunk));
  for (auto& th : pool) th.join();
}

}  // namespace voxstream
