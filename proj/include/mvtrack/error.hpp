#pragma once

#include <stdexcept>
#include <string>

namespace mvtrack {

// Error categories map 1:1 onto CLI exit codes (see tools/).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Missing or unreadable files.
struct IoError : Error {
  using Error::Error;
};

// Malformed file contents: bad magic, version mismatch, truncated payload.
struct FormatError : Error {
  using Error::Error;
};

// Parameter or precondition violations.
struct ValueError : Error {
  using Error::Error;
};

// Numerical failures: non-finite values, failed factorizations,
// degenerate inputs.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace mvtrack
