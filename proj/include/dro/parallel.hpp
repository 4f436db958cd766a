#ifndef DRO_PARALLEL_HPP
#define DRO_PARALLEL_HPP

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dro {

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// Runs f(i) for i in [0, n). Each index must write only to its own slots;
// callers reduce the buffers sequentially afterwards, so parallel and serial
// execution produce bit-identical results.
template <class F>
void parallel_for(std::int64_t n, F&& f, bool parallel = true) {
#ifdef _OPENMP
  if (parallel && n > 1 && omp_get_max_threads() > 1 && !omp_in_parallel()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) f(i);
    return;
  }
#endif
  (void)parallel;
  for (std::int64_t i = 0; i < n; ++i) f(i);
}

}  // namespace dro

#endif  // DRO_PARALLEL_HPP
