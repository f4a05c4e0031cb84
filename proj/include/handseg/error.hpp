#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace handseg {

enum class ErrorKind {
  FileNotFound,
  Parse,
  InvariantViolation,
  Io,
  Config,
  Shape,
  Spec,
  OutOfRange,
  SequenceTooShort,
  EmptyCorpus,
  SingleSubject,
  InvalidMor,
  InvalidFps,
  NoGroundTruth,
  NoMatches,
  Internal,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the core library. The C API maps `kind()` onto
// its status codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Parse failures carry the 1-based line number; line 0 means "no content".
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& reason)
      : Error(ErrorKind::Parse,
              "line " + std::to_string(line) + ": " + reason),
        line_(line),
        reason_(reason) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace handseg
