#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>

namespace fiberlay {

/// Worker count for ensemble loops. Defaults to FIBERLAY_THREADS when set,
/// otherwise the hardware concurrency.
int worker_count();
void set_worker_count(int n);

/// Runs body(i) for i in [0, n). Each index must write only to its own output
/// slot; reductions happen afterwards in index order, so results do not depend
/// on the worker count or scheduling. The exception thrown at the lowest
/// index is rethrown on the calling thread.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  const auto count = static_cast<std::int64_t>(n);
  std::exception_ptr error;
  std::int64_t error_index = count;
#pragma omp parallel for schedule(dynamic, 16) num_threads(worker_count())
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(fiberlay_parallel_error)
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

}  // namespace fiberlay
