#pragma once

#include <stdexcept>
#include <string>

namespace transcoder {

// Every failure raised by the library derives from Error so callers can map
// categories onto process exit codes (see cli/exit_codes.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or hyperparameter values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor shape or dimension mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Object used in an invalid state (double backward, missing gradient, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

// Checkpoint or prefix does not fit the model it is being loaded into.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced during computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace transcoder
