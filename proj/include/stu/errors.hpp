// Copyright (C) 2026 The stu Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stu {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid settings: generator bounds, hyperparameters, config keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Wrong use of an API (empty inputs, mismatched list lengths).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Matrix or parameter vector dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed file; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed file whose content violates the dataset schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Label sequence cannot be aligned to the available frames.
class InfeasibleTargetError : public Error {
 public:
  using Error::Error;
};

/// Non-finite inputs to a numeric routine.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Problem size exceeds what the brute-force oracle will enumerate.
class OracleScopeError : public Error {
 public:
  using Error::Error;
};

/// Training produced non-finite values. `step` is the last optimizer step reached.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long long step) : Error(what), step_(step) {}
  long long step() const { return step_; }

 private:
  long long step_;
};

}  // namespace stu
