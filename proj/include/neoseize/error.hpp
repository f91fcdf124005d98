#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace neoseize {

// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user input or configuration. The CLI maps this to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Malformed binary input; carries the byte offset where parsing failed.
class ParseError : public FormatError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : FormatError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Numerical or data-dependent failure at run time (exit code 1).
class RuntimeError : public Error {
 public:
  using Error::Error;
};

}  // namespace neoseize
