#pragma once

#include <stdexcept>
#include <string>

namespace arrn {

/// Malformed or mismatched file contents (bad magic, truncated payload, wrong version).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible grids, feature counts, or tensor shapes.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or divergence.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument combination supplied by a caller.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace arrn
