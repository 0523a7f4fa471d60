#pragma once

#include <stdexcept>
#include <string>

namespace ocfr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A tensor, grid or mask does not have the dimensions an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument violates a documented precondition (non-finite pixel, bad label, empty list ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Filesystem or decoding failure; the message carries the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (NaN/Inf loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::string dims_str(long a, long b) { return std::to_string(a) + "x" + std::to_string(b); }

}  // namespace detail
}  // namespace ocfr
