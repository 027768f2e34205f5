#pragma once

#include <stdexcept>
#include <string>

namespace melstorm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not fit an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data: WAV containers, weight files, manifests.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration. The message carries the JSON path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace melstorm
