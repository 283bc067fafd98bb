#pragma once

#include <stdexcept>
#include <string>

namespace tsn {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents or channel counts that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content: bad magic, version, truncation, unparsable line.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or precondition on arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input that does not determine a unique answer (e.g. too few correspondences).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

}  // namespace tsn
