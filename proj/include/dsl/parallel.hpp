// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef DSL_PARALLEL_HPP
#define DSL_PARALLEL_HPP

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dsl {

// Worker count used by parallel_for. DSL_THREADS caps it; a programmatic
// override (set_thread_override) wins over the environment. Every parallel
// loop partitions the index range statically, so results are independent of
// the worker count as long as iterations write disjoint outputs.

inline int& thread_override() {
  static int value = 0;  // 0 = no override
  return value;
}

inline void set_thread_override(int n) { thread_override() = n < 0 ? 0 : n; }

inline int thread_count() {
  if (thread_override() > 0) return thread_override();
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  if (const char* env = std::getenv("DSL_THREADS")) {
    char* end = nullptr;
    long cap = std::strtol(env, &end, 10);
    if (end != env && cap > 0 && cap < n) n = static_cast<int>(cap);
  }
  return n;
}

/// Runs fn(i) for i in [begin, end) across worker threads with static
/// contiguous chunking. Exceptions from workers are rethrown (first one wins).
template <typename Fn>
void parallel_for(int begin, int end, Fn&& fn) {
  const int n = end - begin;
  if (n <= 0) return;
  const int workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  const int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int lo = begin + w * chunk;
    const int hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace dsl

#endif  // DSL_PARALLEL_HPP
