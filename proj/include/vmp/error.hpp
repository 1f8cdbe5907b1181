#pragma once

#include <stdexcept>
#include <string>

namespace vmp {

// Bad configuration, violated precondition, or invalid argument.
struct ValueError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file: unparsable JSON, missing field, broken invariant.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failure: NaN/Inf produced, non-SPD matrix, diverged training.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem failure.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace vmp
