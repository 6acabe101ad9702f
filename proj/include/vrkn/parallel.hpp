#pragma once

#include <cstddef>
#include <exception>

namespace vrkn {

/// Serial runs the plain loop and is the reference for every parallel kernel.
enum class Exec { Serial, Parallel };

/// Calls f(i) for i in [0, n). Iterations must be independent; results are
/// identical under both policies because each index owns its outputs and RNG
/// stream. The first exception thrown by any iteration is rethrown.
template <class F>
void for_each_index(std::size_t n, Exec exec, F&& f) {
  if (exec == Exec::Serial) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::exception_ptr err;
  const long count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < count; ++i) {
    try {
      f(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(vrkn_for_each_index)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

/// Number of threads the parallel policy will use.
int thread_count();
/// Applies the VRKN_THREADS environment variable when set. Returns the count in effect.
int configure_threads_from_env();

}  // namespace vrkn
