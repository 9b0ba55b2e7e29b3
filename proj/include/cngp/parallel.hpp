#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace cngp {

inline unsigned default_thread_count() noexcept {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1u : n;
}

/// Runs fn(task) for task in [0, tasks) on up to `threads` workers. Tasks must
/// write disjoint outputs; results never depend on which worker ran a task.
class Executor {
 public:
  explicit Executor(unsigned threads = 1) : threads_(std::max(1u, threads)) {}

  unsigned threads() const noexcept { return threads_; }

  template <class Fn>
  void parallel_for(std::size_t tasks, Fn&& fn) const {
    if (tasks == 0) return;
    const std::size_t workers = std::min<std::size_t>(threads_, tasks);
    if (workers <= 1) {
      for (std::size_t t = 0; t < tasks; ++t) fn(t);
      return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
      for (;;) {
        const std::size_t t = next.fetch_add(1, std::memory_order_relaxed);
        if (t >= tasks) return;
        try {
          fn(t);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    };
    {
      std::vector<std::jthread> pool;
      pool.reserve(workers - 1);
      for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
      body();
    }
    if (error) std::rethrow_exception(error);
  }

 private:
  unsigned threads_;
};

}  // namespace cngp
