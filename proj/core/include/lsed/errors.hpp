#pragma once

#include <stdexcept>
#include <string>

namespace lsed {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller supplied an argument outside an operation's contract.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input file or record is unreadable, malformed or inconsistent.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value (e.g. NaN loss).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace lsed
