#pragma once

#include <stdexcept>
#include <string>

namespace tsc {

/// Category of a failure. The CLI maps these onto process exit codes.
enum class ErrorKind {
  usage,    // bad arguments or configuration
  data,     // malformed or inconsistent input data / files
  numeric,  // divergence, NaN, non-finite results
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Tensor shapes that do not fit an operation. Names the offending axis.
class ShapeError : public DataError {
 public:
  ShapeError(const std::string& op, const std::string& axis, const std::string& detail)
      : DataError(op + ": shape mismatch on axis '" + axis + "': " + detail), axis_(axis) {}

  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

}  // namespace tsc
