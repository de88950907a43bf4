#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace copyhan {

// Violated precondition or misuse of an API (caller bug).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Operand shapes are incompatible.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Malformed or inconsistent input data (corpus, vocabulary, checkpoint, config).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError(what + " (line " + std::to_string(line) + ")"), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// NaN loss, failed gradient check, and similar numerical breakdowns.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace copyhan
