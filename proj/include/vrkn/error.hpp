#pragma once

#include <stdexcept>
#include <string>

namespace vrkn {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Cholesky factorization failed; the matrix is not (numerically) positive definite.
class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered, or a quantity left its admissible domain.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

inline void require_dims(long got, long want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(want) +
                         ", got " + std::to_string(got));
  }
}

}  // namespace vrkn
