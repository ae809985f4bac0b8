#pragma once

#include <stdexcept>
#include <string>

namespace torclass {

/// Base of every error raised by the library. The CLI maps each subclass to
/// an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad invocation or configuration (exit code 2).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A parse failure that knows where it happened.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& field, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + field + ": " + what),
        line_(line),
        field_(field) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

/// Training produced a non-finite loss (exit code 4).
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, const std::string& what)
      : Error("diverged at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace torclass
