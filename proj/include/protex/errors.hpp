#pragma once

#include <stdexcept>
#include <string>

namespace protex {

/// Base of every error the engine raises. The category decides the CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched matrix or vector dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters or arguments (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad or inconsistent input data (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A malformed dataset record. Carries the 1-based line number.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class MagicMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class CountMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class NonFiniteError : public DataError {
 public:
  using DataError::DataError;
};

/// A min/argmin over a set with no participating entries.
class EmptySelectionError : public Error {
 public:
  using Error::Error;
};

/// Label outside {0..K-1}.
class LabelError : public DataError {
 public:
  using DataError::DataError;
};

/// Operation invoked on an object in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

class VersionMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CorruptedFileError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class IoError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace protex
