#pragma once

#include <cstdint>
#include <exception>

namespace rdbn::detail {

/// Runs fn(0..n-1), in parallel when threads > 1. The exception thrown by the
/// lowest failing index is rethrown, so errors match serial execution.
template <class Fn>
void parallel_for(std::int64_t n, std::int32_t threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::int64_t error_index = n;
#pragma omp parallel for num_threads(threads) schedule(dynamic, 4)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
#pragma omp critical(rdbn_parallel_for_error)
      {
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  }
  if (error) std::rethrow_exception(error);
}

} // namespace rdbn::detail
