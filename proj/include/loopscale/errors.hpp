#pragma once

#include <stdexcept>
#include <string>

namespace loopscale {

/// Base of every error the library throws. The CLI maps the subclasses onto
/// exit codes: usage 1, validation 2, numeric 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller supplied arguments that cannot be used (empty input, too few runs,
/// an unidentifiable exponent).
class UsageError : public Error {
 public:
  using Error::Error;
};

class IdentifiabilityError : public UsageError {
 public:
  using UsageError::UsageError;
};

/// Input data is malformed or violates a record invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  ParseError(std::size_t row, const std::string& field, const std::string& what)
      : ValidationError("row " + std::to_string(row) + ", field '" + field + "': " + what),
        row_(row),
        field_(field) {}

  std::size_t row() const { return row_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t row_;
  std::string field_;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class RecipeMismatchError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Argument outside the mathematical domain of a formula.
class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Optimizer or numerical search failure.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace loopscale
