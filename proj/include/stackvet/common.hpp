#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stackvet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor dimensions or layer configuration do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition on an argument value was violated.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// On-disk data is truncated, corrupt, or of an unknown version.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Forward pass behaviour switch shared by batch-norm, dropout and models.
enum class Mode { train, infer };

}  // namespace stackvet
