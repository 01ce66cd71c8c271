#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace txray {

/// Base of every error the toolkit throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad invocation: unknown flag, malformed option value. CLI exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a documented contract. CLI exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Two inputs that must agree (h, magnitude mode, vocabulary) do not.
class ContractError : public DataError {
 public:
  using DataError::DataError;
};

/// A file could not be parsed. `line` is 1-based, 0 when not applicable.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : DataError(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Annotation tokens do not line up with the corpus.
class AlignmentError : public DataError {
 public:
  AlignmentError(const std::string& what, std::size_t position, std::size_t line)
      : DataError(what + " at token position " + std::to_string(position) +
                  " (annotation line " + std::to_string(line) + ")"),
        position_(position),
        line_(line) {}
  std::size_t position() const noexcept { return position_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t position_;
  std::size_t line_;
};

/// A quantity is mathematically undefined for the given inputs.
class IllDefinedError : public DataError {
 public:
  using DataError::DataError;
};

/// Training produced a non-finite loss.
class DivergenceError : public DataError {
 public:
  DivergenceError(const std::string& phase, int epoch)
      : DataError(phase + " diverged (non-finite loss) in epoch " + std::to_string(epoch)),
        epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace txray
