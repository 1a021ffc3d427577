#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace qlab {

// Runs fn(i) for every i in [0, n). Work items are claimed from a shared
// atomic counter, so there is no per-thread partitioning to tune; fn must
// write its result into caller-owned per-index storage, which keeps the
// reduction order (a later sequential pass over indices) independent of
// scheduling. n_threads <= 1 runs inline. The first exception thrown by fn is
// rethrown on the calling thread after all workers join.
inline void parallel_for(std::size_t n, int n_threads,
                         const std::function<void(std::size_t)>& fn) {
  if (n_threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };

  const std::size_t k = std::min<std::size_t>(n, static_cast<std::size_t>(n_threads));
  std::vector<std::thread> pool;
  pool.reserve(k);
  for (std::size_t t = 0; t < k; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace qlab
