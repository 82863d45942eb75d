#pragma once

#include <stdexcept>
#include <string>

namespace icluster {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data failed validation (non-finite values, inconsistent sample sets).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A caller violated a documented precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A linear-algebra step failed (singular or indefinite system).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. `line` is 1-based, `column` is 1-based or 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line, int column = 0)
      : Error(what), line_(line), column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace icluster
