#include "vrkn/parallel.hpp"

#include <cstdlib>
#include <string>

#include <omp.h>

#include "vrkn/error.hpp"

namespace vrkn {

int thread_count() { return omp_get_max_threads(); }

int configure_threads_from_env() {
  if (const char* env = std::getenv("VRKN_THREADS")) {
    int n = 0;
    try {
      n = std::stoi(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("VRKN_THREADS must be a positive integer, got '") + env + "'");
    }
    if (n <= 0) throw ConfigError("VRKN_THREADS must be a positive integer");
    omp_set_num_threads(n);
  }
  return thread_count();
}

}  // namespace vrkn
