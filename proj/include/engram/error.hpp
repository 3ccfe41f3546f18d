#pragma once

#include <stdexcept>
#include <string>

namespace engram {

/// Coarse error class; the CLI maps it to its exit code.
enum class ErrorKind {
  usage = 1,    // invalid request: bad pattern, bad argument
  data = 2,     // bad input data: unknown symbol, shape mismatch, corrupt file
  numeric = 3,  // numeric failure: divergence, degenerate distribution
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct DimensionError : DataError {
  using DataError::DataError;
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

}  // namespace engram
