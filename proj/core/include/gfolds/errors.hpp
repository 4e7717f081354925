// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gfolds {

// Base of every error raised by the library. The CLI maps the category
// (see error_category) onto its exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ErrorCategory { kConfig, kData, kNumerical, kOther };

// Invalid configuration or hyperparameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor extents that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Token, feature or row index outside its table.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Optimizer asked to step a parameter that has no gradient.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Input data violating a structural schema (labels, endpoints, cycles).
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Malformed text input; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class PreprocessError : public Error {
 public:
  using Error::Error;
};

// Binary container problems: bad magic, version mismatch, truncation.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Loss over zero positions.
class EmptyBatchError : public Error {
 public:
  using Error::Error;
};

// Argument outside the domain of a closed-form expression.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Non-finite values during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline ErrorCategory error_category(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr ||
      dynamic_cast<const DomainError*>(&e) != nullptr) {
    return ErrorCategory::kConfig;
  }
  if (dynamic_cast<const NumericalError*>(&e) != nullptr) {
    return ErrorCategory::kNumerical;
  }
  if (dynamic_cast<const SchemaError*>(&e) != nullptr ||
      dynamic_cast<const ParseError*>(&e) != nullptr ||
      dynamic_cast<const PreprocessError*>(&e) != nullptr ||
      dynamic_cast<const FormatError*>(&e) != nullptr ||
      dynamic_cast<const IndexError*>(&e) != nullptr ||
      dynamic_cast<const EmptyBatchError*>(&e) != nullptr) {
    return ErrorCategory::kData;
  }
  return ErrorCategory::kOther;
}

}  // namespace gfolds
