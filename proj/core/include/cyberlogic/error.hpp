#pragma once

#include <stdexcept>
#include <string>

namespace cyberlogic {

enum class ErrorKind {
  Syntax,
  Sort,
  DuplicateLabel,
  NotInFragment,
  UnknownMacro,
  Decode,
  Crypto,
  KeyMismatch,
  Registry,
  Transport,
  Usage,
  Engine,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Parse errors carry a 1-based source position.
class SyntaxError : public Error {
 public:
  SyntaxError(int line, int column, const std::string& what)
      : Error(ErrorKind::Syntax, std::to_string(line) + ":" +
                                     std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

}  // namespace cyberlogic
