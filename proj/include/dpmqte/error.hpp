#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dpmqte {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument (range, shape, flag combination) was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Cholesky factorization failed; `pivot()` is the zero-based column where the
/// leading minor stopped being positive.
class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(std::size_t pivot, const std::string& what)
      : Error(what), pivot_(pivot) {}
  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

/// A numerical routine could not produce a result (runaway loop, degenerate
/// input discovered mid-computation, grid that does not cover a quantile).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace dpmqte
