#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace latnr {

// Thread-count control shared by the OpenMP kernels. A cap of 0 means
// "use the OpenMP default".
void set_thread_cap(int threads);
int thread_cap();

// Runs body(i) for i in [0, count). The parallel flavour distributes
// iterations across OpenMP threads; each iteration must write only to its
// own slots so results do not depend on the schedule. The serial flavour
// is the reference implementation used by tests and the benchmark.
template <typename Body>
void parallel_for(std::size_t count, const Body& body) {
#ifdef _OPENMP
  const int cap = thread_cap();
#pragma omp parallel for schedule(dynamic, 1) num_threads(cap > 0 ? cap : omp_get_max_threads())
  for (long long i = 0; i < static_cast<long long>(count); ++i) {
    body(static_cast<std::size_t>(i));
  }
#else
  for (std::size_t i = 0; i < count; ++i) body(i);
#endif
}

template <typename Body>
void serial_for(std::size_t count, const Body& body) {
  for (std::size_t i = 0; i < count; ++i) body(i);
}

}  // namespace latnr
