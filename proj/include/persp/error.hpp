#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace persp {

/// Base of every error raised by the library. Carries the process exit code
/// the CLI maps it to.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, int exit_code)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

/// Invalid configuration or parameters (exit code 2).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, 2) {}
};

/// Malformed, missing or inconsistent input data (exit code 3).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what, 3) {}
};

/// Non-finite values or numerically undefined quantities (exit code 4).
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(what, 4) {}
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t row) : DataError(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Raised when (text_id, annotator_id) pairs repeat. `rows` lists every
/// offending data row (1-based, header excluded).
class DuplicateError : public DataError {
 public:
  DuplicateError(const std::string& what, std::vector<std::size_t> rows)
      : DataError(what), rows_(std::move(rows)) {}
  const std::vector<std::size_t>& rows() const noexcept { return rows_; }

 private:
  std::vector<std::size_t> rows_;
};

class EmptyDatasetError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace persp
