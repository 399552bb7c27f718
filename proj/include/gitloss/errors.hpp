#pragma once

#include <stdexcept>
#include <string>

namespace gitloss {

// Base of every error raised by the library. Callers that only need to
// report a failure can catch this.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible matrix shapes.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid argument value (negative stddev, zero batch size, ...).
struct ParameterError : Error {
  using Error::Error;
};

// Class index outside [0, n_classes).
struct LabelError : Error {
  using Error::Error;
};

// NaN or infinity where a finite value is required.
struct NumericError : Error {
  using Error::Error;
};

// Malformed file content, e.g. a bad IDX magic number.
struct FormatError : Error {
  using Error::Error;
};

// A file that cannot be read or written, or ends early.
struct IoError : Error {
  using Error::Error;
};

// Two inputs that must agree do not (e.g. image and label counts).
struct ConsistencyError : Error {
  using Error::Error;
};

}  // namespace gitloss
