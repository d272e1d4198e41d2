#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace resque {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument, shape, or configuration value.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Malformed tensor file. `offset()` is the byte position where decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// NaN/Inf encountered during training or evaluation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A class label required for per-class aggregation has no samples.
class MissingClassError : public Error {
 public:
  explicit MissingClassError(int label)
      : Error("class " + std::to_string(label) + " has no samples"), label_(label) {}
  int label() const noexcept { return label_; }

 private:
  int label_;
};

/// Quantity is undefined for the given input (zero vector, all-zero layer, constant series).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Not enough completed records to compute a correlation.
class UnderpoweredError : public Error {
 public:
  UnderpoweredError(const std::string& what, std::vector<std::string> missing)
      : Error(what), missing_(std::move(missing)) {}
  const std::vector<std::string>& missing_cells() const noexcept { return missing_; }

 private:
  std::vector<std::string> missing_;
};

/// Failure inside a multi-stage pipeline, tagged with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace resque
