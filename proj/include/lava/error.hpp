// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace lava {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (shape, range, normalization).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value. `field` carries the dotted config path when known.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::string field = {})
      : Error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Non-finite value encountered during a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `line` is 1-based, 0 when not line-specific.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message, std::size_t line = 0)
      : Error(line == 0 ? message : "line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Operation invoked on a model or bank in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Synthetic generator could not satisfy the requested geometry.
class GenerationError : public Error {
 public:
  using Error::Error;
};

// Warnings are collected per thread; callers drain them with take_warnings().
void warn(std::string message);
std::vector<std::string> take_warnings();
std::size_t warning_count();

}  // namespace lava
