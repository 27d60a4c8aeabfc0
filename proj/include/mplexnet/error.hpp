#pragma once

#include <stdexcept>
#include <string>

namespace mplexnet {

/// Base class for all library errors. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or matrix shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument values (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A required input artifact is absent or belongs to another run (exit code 3).
class ArtifactError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or a degenerate numerical state (exit code 4).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// AUC requested for labels with a single class.
class UndefinedMetricError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Malformed file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace mplexnet
