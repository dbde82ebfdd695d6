#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dnres {

enum class ErrorCode {
  shape_mismatch,
  invalid_argument,
  numeric,
  format,
  io,
  topology,
};

const char* to_string(ErrorCode code);

/// Base class for every error raised by the engine. Carries a machine
/// readable code next to the human readable message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// A tensor dimension did not match what an operation requires.
class ShapeError : public Error {
 public:
  ShapeError(std::string operation, std::string dimension, std::size_t expected, std::size_t actual);

  const std::string& operation() const noexcept { return operation_; }
  const std::string& dimension() const noexcept { return dimension_; }
  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::string operation_;
  std::string dimension_;
  std::size_t expected_;
  std::size_t actual_;
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message) : Error(ErrorCode::numeric, message) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message) : Error(ErrorCode::format, message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error(ErrorCode::io, message) {}
};

class TopologyError : public Error {
 public:
  explicit TopologyError(const std::string& message) : Error(ErrorCode::topology, message) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message) : Error(ErrorCode::invalid_argument, message) {}
};

}  // namespace dnres
