#pragma once

#include <stdexcept>
#include <string>

namespace vfield {

/// Malformed argument: dimension mismatch, empty region, unclosed loop.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation not permitted in the current state (e.g. stepping a finished episode).
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class UnsupportedConfiguration : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite loss, gradient or network output during training or acting.
class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint container problems.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CorruptFile : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class VersionMismatch : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class ShapeMismatch : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Config parse or validation failure; `field` is the dotted path at fault.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace vfield
