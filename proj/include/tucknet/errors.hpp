#pragma once

#include <stdexcept>
#include <string>

namespace tucknet {

// Shape/dimension mismatch between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Mode (axis) index outside [0, order).
class ModeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Invalid argument value (bad rank, bad fraction, bad class count, ...).
class ValueError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical failure at runtime: SVD did not converge, training diverged.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Attempt to mutate a frozen shared core.
class FrozenCoreError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Filesystem-level failure (open/read/write/rename).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tucknet
