#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace blockwords {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A state that breaks the tower/hand invariants.
class InvalidState : public Error {
 public:
  using Error::Error;
};

/// An action whose preconditions do not hold in the given state.
class IllegalAction : public Error {
 public:
  using Error::Error;
};

/// A goal string that is not 3-8 lowercase letters, or cannot be spelled.
class InvalidWord : public Error {
 public:
  using Error::Error;
};

class EmptySupport : public Error {
 public:
  using Error::Error;
};

/// No dictionary word completes the requested tower reading.
class InfeasibleCompletion : public Error {
 public:
  using Error::Error;
};

/// A proposal strategy could not produce any word in this state.
class NoProposal : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; carries the offending line (1-based, 0 if unknown).
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace blockwords
