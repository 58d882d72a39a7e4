#pragma once

#include <stdexcept>
#include <thread>
#include <vector>

namespace gpa3d {

// Runs f(i) for i in [0, n) using up to `workers` threads. Each index is
// processed exactly once and writes only to its own output slot, so results
// are bit-identical to the serial order for any worker count. Callers that
// reduce across indices must do so serially after this returns.
template <typename F>
void parallel_for_indexed(int n, int workers, F&& f) {
  if (n <= 0) return;
  if (workers <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  const int thread_count = std::min(workers, n);
  std::vector<std::thread> threads;
  threads.reserve(thread_count);
  std::vector<std::exception_ptr> errors(thread_count);
  for (int t = 0; t < thread_count; ++t) {
    threads.emplace_back([&, t]() {
      try {
        for (int i = t; i < n; i += thread_count) f(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
}

}  // namespace gpa3d
