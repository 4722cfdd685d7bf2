#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace hetnl {

namespace detail {
inline std::atomic<int> &thread_setting() {
  static std::atomic<int> n{1};
  return n;
}
} // namespace detail

/// Number of worker threads used by the inner loops (default 1).
inline int num_threads() { return detail::thread_setting().load(); }
inline void set_num_threads(int n) {
  detail::thread_setting().store(std::max(1, n));
}

/// Runs fn(i) for i in [0, n). Work is split into contiguous blocks, so any
/// per-index writes are independent of the thread count.
template <class Fn> void parallel_for(std::size_t n, Fn &&fn) {
  const auto threads =
      static_cast<std::size_t>(std::min<std::size_t>(num_threads(), n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  // the first exception (by block order) is rethrown after all workers join
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    const std::size_t block = (n + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t lo = t * block, hi = std::min(n, lo + block);
      pool.emplace_back([&fn, &errors, t, lo, hi] {
        try {
          for (std::size_t i = lo; i < hi; ++i) fn(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (const auto &e : errors)
    if (e) std::rethrow_exception(e);
}

/// Sum of term(i) over [0, n) with a fixed chunking. Partial sums are
/// combined in chunk order, so the result does not depend on the thread count.
template <class Term>
double ordered_sum(std::size_t n, Term &&term, std::size_t chunk = 512) {
  const std::size_t chunks = (n + chunk - 1) / chunk;
  std::vector<double> partial(chunks, 0.0);
  parallel_for(chunks, [&](std::size_t c) {
    double s = 0.0;
    const std::size_t hi = std::min(n, (c + 1) * chunk);
    for (std::size_t i = c * chunk; i < hi; ++i) s += term(i);
    partial[c] = s;
  });
  double total = 0.0;
  for (double s : partial) total += s;
  return total;
}

} // namespace hetnl
