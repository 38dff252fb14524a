#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tsum {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input data: malformed files, schema violations, shape mismatches.
class DataError : public Error {
 public:
  enum class Kind { parse, conflict, schema, range, shape, size, missing };

  DataError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// CSV row that could not be parsed. Carries the 1-based line number.
class ParseError : public DataError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : DataError(Kind::parse, file + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Overflow or a non-finite loss during evaluation or training.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& block, const std::string& what)
      : Error(what + " [" + block + "]"), block_(block) {}

  const std::string& block() const noexcept { return block_; }

 private:
  std::string block_;
};

/// Bad command line or configuration file.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint document that is missing fields or carries the wrong version.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace tsum
