#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace subspec::parallel {

namespace detail {
inline std::atomic<int>& configured_threads() {
  static std::atomic<int> n{0};
  return n;
}
inline thread_local bool in_worker = false;
}  // namespace detail

/// 0 selects hardware concurrency.
inline void set_threads(int n) { detail::configured_threads().store(std::max(0, n)); }

inline int threads() {
  const int n = detail::configured_threads().load();
  if (n > 0) return n;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Calls fn(i) for i in [0, n). Indices are split into contiguous chunks, one per worker.
/// Work below `min_parallel` indices, or issued from inside a worker, runs inline.
/// Callers write results per index, so the outcome never depends on the thread count.
inline void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn,
                           std::size_t min_parallel = 256) {
  const int workers = detail::in_worker ? 1 : std::min<int>(threads(), static_cast<int>(n));
  if (workers <= 1 || n < min_parallel) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const std::size_t chunk = (n + static_cast<std::size_t>(workers) - 1) / static_cast<std::size_t>(workers);
  for (int w = 0; w < workers; ++w) {
    const std::size_t lo = static_cast<std::size_t>(w) * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      detail::in_worker = true;
      for (std::size_t i = lo; i < hi; ++i) fn(i);
      detail::in_worker = false;
    });
  }
  for (auto& t : pool) t.join();
}

/// Deterministic sum of row(i) over i in [0, n): rows are evaluated (possibly in parallel)
/// into a buffer and then added in index order.
inline double sum_rows(std::size_t n, const std::function<double(std::size_t)>& row,
                       std::size_t min_parallel = 256) {
  std::vector<double> parts(n);
  for_each_index(n, [&](std::size_t i) { parts[i] = row(i); }, min_parallel);
  double total = 0.0;
  for (double v : parts) total += v;
  return total;
}

/// Runs tasks on a small work pool (tasks pull the next index). Nested parallel
/// reductions inside a task run inline.
inline void run_pool(std::size_t count, const std::function<void(std::size_t)>& task) {
  const int workers = detail::in_worker ? 1 : std::min<int>(threads(), static_cast<int>(count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      detail::in_worker = true;
      for (std::size_t i = next++; i < count; i = next++) task(i);
      detail::in_worker = false;
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace subspec::parallel
