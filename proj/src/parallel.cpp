#include "dcmeld/parallel.hpp"

#include <atomic>

namespace dcmeld {

namespace {

std::atomic<std::size_t> g_default_workers{
    std::max<std::size_t>(1, std::thread::hardware_concurrency())};
thread_local std::size_t t_override = 0;

}  // namespace

std::size_t worker_count() noexcept {
  return t_override != 0 ? t_override : g_default_workers.load(std::memory_order_relaxed);
}

void set_default_worker_count(std::size_t n) noexcept {
  g_default_workers.store(std::max<std::size_t>(1, n), std::memory_order_relaxed);
}

ScopedWorkers::ScopedWorkers(std::size_t n) noexcept : previous_(t_override) {
  t_override = std::max<std::size_t>(1, n);
}

ScopedWorkers::~ScopedWorkers() { t_override = previous_; }

void run_concurrently(const std::vector<std::function<void()>>& tasks) {
  const std::size_t total = worker_count();
  if (tasks.size() <= 1 || total <= 1) {
    for (const auto& task : tasks) task();
    return;
  }
  const std::size_t k = tasks.size();
  std::vector<std::exception_ptr> errors(k);
  std::vector<std::thread> threads;
  threads.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t share = std::max<std::size_t>(1, total / k + (j < total % k ? 1 : 0));
    threads.emplace_back([&, j, share] {
      ScopedWorkers scope(share);
      try {
        tasks[j]();
      } catch (...) {
        errors[j] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace dcmeld
