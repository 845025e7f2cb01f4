#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates an operation's precondition (shape, range, arity).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Exhaustive enumeration was requested beyond the supported size.
class CombinatorialLimit : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// Malformed binary file. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during optimisation.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace trn
