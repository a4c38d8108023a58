#pragma once

// Minimal block-partitioned worker helper. The thread count is capped by
// the ROBSUB_THREADS environment variable (hardware concurrency when
// unset). Used only where module contracts permit parallelism.

#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "robsub/types.hpp"

namespace robsub {

inline int worker_thread_cap() {
  if (const char* env = std::getenv("ROBSUB_THREADS")) {
    try {
      const int parsed = std::stoi(env);
      if (parsed >= 1) return parsed;
    } catch (const std::exception&) {
      // fall through to the hardware default
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Run fn(begin, end) over a block partition of [0, n). Exceptions from
/// workers are rethrown on the calling thread.
inline void parallel_for_blocks(Index n, const std::function<void(Index, Index)>& fn,
                                int max_threads = worker_thread_cap()) {
  if (n <= 0) return;
  const int threads = static_cast<int>(std::min<Index>(std::max(max_threads, 1), n));
  if (threads == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  const Index chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const Index begin = static_cast<Index>(t) * chunk;
    const Index end = std::min<Index>(begin + chunk, n);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& worker : pool) worker.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace robsub
