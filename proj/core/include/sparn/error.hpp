#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sparn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `line()` is 1-based; 0 when no line applies.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EncodingError : public Error {
 public:
  EncodingError(const std::string& what, std::size_t row, std::size_t col)
      : Error(what + " at row " + std::to_string(row) + ", column " + std::to_string(col)),
        row_(row),
        col_(col) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Unknown or unsupported serialized model version / layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Precondition violated by the caller (bad config, bad argument).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace sparn
