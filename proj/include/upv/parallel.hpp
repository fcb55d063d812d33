#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace upv {

/// Worker count for data-parallel stages. Override with UPV_THREADS.
inline int thread_count() {
  static const int n = [] {
    if (const char* env = std::getenv("UPV_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }();
  return n;
}

/// Runs fn(block, begin, end) over `blocks` contiguous index ranges covering
/// [0, n). The block structure is fixed by (n, blocks) alone — never by the
/// worker count — so any per-block accumulation reduced in block order gives
/// results that do not depend on the machine's core count.
template <class Fn>
void parallel_for_blocks(std::int64_t n, int blocks, Fn&& fn) {
  if (n <= 0) return;
  if (blocks > n) blocks = static_cast<int>(n);
  if (blocks < 1) blocks = 1;

  const std::int64_t chunk = (n + blocks - 1) / blocks;
  int workers = std::min(thread_count(), blocks);

  if (workers <= 1) {
    for (int b = 0; b < blocks; ++b) {
      std::int64_t begin = b * chunk;
      std::int64_t end = std::min<std::int64_t>(n, begin + chunk);
      if (begin < end) fn(b, begin, end);
    }
    return;
  }

  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr first_error = nullptr;
  std::mutex error_mutex;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        int b = next.fetch_add(1);
        if (b >= blocks) break;
        std::int64_t begin = b * chunk;
        std::int64_t end = std::min<std::int64_t>(n, begin + chunk);
        if (begin >= end) continue;
        try {
          fn(b, begin, end);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// Independent per-item parallel loop: fn(i) writes only to slot i of some
/// preallocated output, so scheduling order cannot affect the result.
template <class Fn>
void parallel_for_each(std::int64_t n, Fn&& fn) {
  parallel_for_blocks(n, thread_count() * 4, [&](int, std::int64_t begin, std::int64_t end) {
    for (std::int64_t i = begin; i < end; ++i) fn(i);
  });
}

}  // namespace upv
