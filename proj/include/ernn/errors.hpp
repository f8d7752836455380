#pragma once

#include <stdexcept>
#include <string>

namespace ernn {

// Base class for everything thrown by this library, so callers can catch
// one type at the CLI boundary and map it to an exit code.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad arguments or preconditions: wrong dimensions, out-of-range knobs,
// malformed files. Maps to exit code 2 in the CLI.
struct InvalidInputError : Error {
  using Error::Error;
};

// Config-file specific variant that remembers which key was bad.
struct ConfigError : InvalidInputError {
  ConfigError(std::string key_in, const std::string& message)
      : InvalidInputError(key_in + ": " + message), key(std::move(key_in)) {}
  std::string key;
};

// A finite-precision routine produced NaN/Inf or overflowed. Exit code 3.
struct NumericOverflowError : Error {
  using Error::Error;
};

// An iterative routine ran out of its iteration budget. Exit code 3.
struct ConvergenceError : Error {
  using Error::Error;
};

// LU elimination hit a pivot below threshold.
struct SingularMatrixError : NumericOverflowError {
  using NumericOverflowError::NumericOverflowError;
};

// An object was used before it was ready (e.g. backward before forward).
struct StateError : Error {
  using Error::Error;
};

}  // namespace ernn
