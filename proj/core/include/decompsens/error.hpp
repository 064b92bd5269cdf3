#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace decompsens {

/// Broad classes of failure. The CLI maps these onto exit codes and the
/// `kind` field of its error record.
enum class ErrorKind {
  io,
  schema,
  parse,
  collinearity,
  lookup,
  domain,
  no_solution,
  positivity,
  search,
  validation,
  mismatch,
  dependency,
  bootstrap,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error(ErrorKind::io, m) {}
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& m) : Error(ErrorKind::schema, m) {}
};

/// Unparseable cell. `row()` is the 1-based data row (header excluded).
class ParseError : public Error {
 public:
  ParseError(const std::string& m, std::size_t row)
      : Error(ErrorKind::parse, m), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class CollinearityError : public Error {
 public:
  explicit CollinearityError(const std::string& m)
      : Error(ErrorKind::collinearity, m) {}
};

class LookupError : public Error {
 public:
  explicit LookupError(const std::string& m) : Error(ErrorKind::lookup, m) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& m) : Error(ErrorKind::domain, m) {}
};

class NoSolutionError : public Error {
 public:
  explicit NoSolutionError(const std::string& m)
      : Error(ErrorKind::no_solution, m) {}
};

class PositivityError : public Error {
 public:
  explicit PositivityError(const std::string& m)
      : Error(ErrorKind::positivity, m) {}
};

class SearchError : public Error {
 public:
  explicit SearchError(const std::string& m) : Error(ErrorKind::search, m) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& m)
      : Error(ErrorKind::validation, m) {}
};

class MismatchError : public Error {
 public:
  explicit MismatchError(const std::string& m)
      : Error(ErrorKind::mismatch, m) {}
};

class DependencyError : public Error {
 public:
  explicit DependencyError(const std::string& m)
      : Error(ErrorKind::dependency, m) {}
};

class BootstrapError : public Error {
 public:
  explicit BootstrapError(const std::string& m)
      : Error(ErrorKind::bootstrap, m) {}
};

}  // namespace decompsens
