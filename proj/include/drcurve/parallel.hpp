#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace drcurve {

//! Resolves a requested worker count: positive values are taken as is,
//! zero falls back to DRCURVE_THREADS and then to the hardware concurrency.
inline int resolve_threads(int requested)
{
  if (requested > 0) {
    return requested;
  }
  if (const char* env = std::getenv("DRCURVE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) {
      return v;
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

//! Runs body(i) for i in [0, count). Each index is handled exactly once and
//! results must be written to index-addressed storage, so the outcome does
//! not depend on the worker count. The first exception thrown by any worker
//! is rethrown on the calling thread.
template <class Body>
void parallel_for(std::int64_t count, int threads, Body&& body)
{
  const int workers = static_cast<int>(
    std::min<std::int64_t>(std::max(1, threads), std::max<std::int64_t>(count, 1)));
  if (workers <= 1) {
    for (std::int64_t i = 0; i < count; ++i) {
      body(i);
    }
    return;
  }

  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::int64_t i = w; i < count; i += workers) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) {
            failure = std::current_exception();
          }
          return;
        }
      }
    });
  }
  for (auto& t : pool) {
    t.join();
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
}

} // namespace drcurve
