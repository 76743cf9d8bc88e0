#pragma once

#include <stdexcept>

namespace ficots {

// Configuration / invariant violations. CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Problems with input data or on-disk formats. CLI exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric failures: non-finite values, failed checks. CLI exit code 4.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor dimension mismatches.
struct ShapeError : NumericError {
  using NumericError::NumericError;
};

}  // namespace ficots
