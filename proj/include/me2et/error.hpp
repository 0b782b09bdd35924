#pragma once

#include <stdexcept>
#include <string>

namespace me2et {

// Raised when tensor shapes are incompatible for an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when user-supplied inputs or configuration violate a documented precondition.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace me2et
