#pragma once

#include "dcmeld/types.hpp"

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace dcmeld {

/// Worker count used by parallel_for on the calling thread. The process-wide
/// default can be overridden per thread with ScopedWorkers, which lets
/// concurrent stage tasks share the pool without oversubscribing.
std::size_t worker_count() noexcept;
void set_default_worker_count(std::size_t n) noexcept;

class ScopedWorkers {
 public:
  explicit ScopedWorkers(std::size_t n) noexcept;
  ~ScopedWorkers();
  ScopedWorkers(const ScopedWorkers&) = delete;
  ScopedWorkers& operator=(const ScopedWorkers&) = delete;

 private:
  std::size_t previous_;
};

/// Runs body(i) for i in [0, n) over static contiguous chunks. Exceptions from
/// any chunk are rethrown on the calling thread (the first by chunk order).
template <typename Body>
void parallel_for(Index n, Body&& body) {
  if (n <= 0) return;
  const std::size_t workers = std::min<std::size_t>(worker_count(), static_cast<std::size_t>(n));
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  const Index chunk = (n + static_cast<Index>(workers) - 1) / static_cast<Index>(workers);
  auto run_chunk = [&](std::size_t w) {
    ScopedWorkers inner(1);
    const Index lo = static_cast<Index>(w) * chunk;
    const Index hi = std::min(n, lo + chunk);
    try {
      for (Index i = lo; i < hi; ++i) body(i);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(run_chunk, w);
  run_chunk(0);
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Runs independent tasks concurrently, splitting the current worker budget
/// between them. Each task sees its share through worker_count().
void run_concurrently(const std::vector<std::function<void()>>& tasks);

}  // namespace dcmeld
