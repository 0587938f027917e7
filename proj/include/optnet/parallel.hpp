#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace optnet {

inline int available_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

/// Runs f(i) for i in [0, count). Iterations must not share mutable state.
/// With threads <= 1 (or when already inside a parallel region) this is a
/// plain loop. The first exception by index is rethrown after the loop.
template <class F>
void parallel_for(std::size_t count, int threads, F&& f) {
  std::vector<std::exception_ptr> errors(count);
  bool nested = false;
#if defined(_OPENMP)
  nested = omp_in_parallel();
#endif
  if (threads <= 1 || nested || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  const long n = static_cast<long>(count);
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (long i = 0; i < n; ++i) {
    try {
      f(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace optnet
