#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace execstream {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Wire-level failures. TruncatedError means "need more bytes", which stream
// readers treat differently from a corrupt frame.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TruncatedError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class StoreError : public std::runtime_error {
 public:
  StoreError(std::size_t offset, const std::string& what)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BlockOutOfRange : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class UnknownExecutable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace execstream
