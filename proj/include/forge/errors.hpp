#pragma once

#include <stdexcept>
#include <string>

namespace forge {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor, mask or crop dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Input file is readable but its content is not supported (bit depth, magic, version).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint written by an unsupported format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Checkpoint payload failed its integrity check.
class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// A checkpoint trained for C channels was applied to data with a different C.
class ChannelMismatchError : public ShapeError {
 public:
  using ShapeError::ShapeError;
};

/// Invalid configuration value (schedule length, brush ranges, training recipe).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared during training or sampling.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace forge
