#pragma once

#include <stdexcept>
#include <string>

namespace slotbench {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values or ranges.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or missing on-disk data (dataset container, checkpoint, report).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Failure writing to disk.
class StorageError : public Error {
 public:
  using Error::Error;
};

/// Tensor or array dimensions that do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered in a forward pass or loss term.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Pixel optimisation produced a non-finite loss.
class OptimizationError : public Error {
 public:
  OptimizationError(const std::string& what, int iteration)
      : Error(what), iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

/// Bad arguments to a pure function (non-finite costs, empty splits, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A statistic that is undefined for the given input (e.g. zero variance).
class UndefinedResultError : public Error {
 public:
  using Error::Error;
};

}  // namespace slotbench
