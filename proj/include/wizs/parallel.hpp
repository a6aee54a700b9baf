#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace wizs {

/// Runs fn(i) for i in [0, n) on at most `limit` threads. Returns one
/// exception slot per index (null on success); never throws itself.
template <typename Fn>
std::vector<std::exception_ptr> parallel_for(std::size_t n, int limit, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, limit)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
    return errors;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) run(i);
    });
  }
  pool.clear();  // joins
  return errors;
}

/// Rethrows the lowest-index failure, if any.
inline void rethrow_first(const std::vector<std::exception_ptr>& errors) {
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace wizs
