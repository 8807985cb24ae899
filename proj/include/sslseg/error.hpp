#pragma once

#include <stdexcept>
#include <string>

namespace sslseg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: malformed config, shape mismatch, unsatisfiable request.
/// The CLI maps these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class StratificationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class AssimilationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NumericError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Failures while running: I/O, corrupt files, diverging training.
/// The CLI maps these to exit code 2.
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

class IoError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class CheckpointError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class TrainingError : public RuntimeFailure {
 public:
  TrainingError(const std::string& what, int epoch) : RuntimeFailure(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace sslseg
