#pragma once

#include <stdexcept>
#include <string>

namespace abcran {

/// Caller passed a value outside an operation's documented domain.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tensor or vector shapes do not satisfy an operation's shape rule.
class ShapeError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// On-disk artifact is unreadable, truncated, or inconsistent with its metadata.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation produced NaN or Inf.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tape misuse: backward twice, stale handles after reset, non-scalar outputs.
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace abcran
