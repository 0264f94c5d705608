#pragma once

#include <stdexcept>

namespace fsoacq {

/// Base class for failures of a numerical procedure on otherwise valid input.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative method or truncated series did not reach its tolerance.
class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// The requested quantity is infinite (e.g. a mean time with certain failure).
class DivergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace fsoacq
