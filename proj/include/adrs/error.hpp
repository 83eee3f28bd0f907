#ifndef ADRS_ERROR_HPP_
#define ADRS_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace adrs {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing, unreadable or unwritable file.
class IoError : public Error {
 public:
  using Error::Error;
};

/// File content disagrees with its declared layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A value violates a documented invariant or precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Regions could not be placed within the retry budget.
class PlacementError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or unusable configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes are incompatible.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint written by an incompatible format version.
class VersionError : public Error {
 public:
  using Error::Error;
};

}  // namespace adrs

#endif  // ADRS_ERROR_HPP_
