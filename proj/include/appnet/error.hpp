#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace appnet {

enum class ErrorKind {
  IdOutOfRange,
  NegativeWeight,
  SelfLoop,
  Asymmetric,
  NonBinaryWeight,
  ParseError,
  ConflictingTimestamp,
  DimensionMismatch,
  EmptyData,
  NoPositives,
  InvalidArgument,
  NonFinite,
  MissingTimestamps,
};

const char* to_string(ErrorKind kind);

// Base error for every data, model, and protocol failure raised by the library.
// `line` is 1-based when the error came from a text stream, 0 otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, std::size_t line = 0);

  ErrorKind kind() const noexcept { return kind_; }
  std::size_t line() const noexcept { return line_; }

 private:
  ErrorKind kind_;
  std::size_t line_;
};

}  // namespace appnet
