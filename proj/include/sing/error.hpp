#pragma once

#include <stdexcept>
#include <string>

namespace sing {

// Error taxonomy aligned with the CLI exit codes: parse/format/validation
// problems are data errors (exit 2), NumericError is a numerical failure
// (exit 3). Usage errors never reach these types.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text input (annotation files, config files).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Broken binary containers: bad magic, truncation, size mismatches.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Structurally valid input that violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Tensor / feature dimension mismatches.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite losses, failed self-checks.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace sing
