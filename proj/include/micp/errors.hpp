#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace micp {

// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed input line (bad JSON, wrong field types).
class ParseError : public Error {
public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

// Well-formed JSON that violates a record invariant.
class SchemaError : public Error {
public:
  SchemaError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": schema: " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

// Invalid configuration or argument values.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Calibration cannot proceed: infeasible budgets, empty calibration pools.
class ConstraintError : public Error {
public:
  using Error::Error;
};

class VersionError : public Error {
public:
  using Error::Error;
};

}  // namespace micp
