#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace seqval {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownSymbol : public Error {
 public:
  explicit UnknownSymbol(std::size_t pos)
      : Error("unknown symbol at position " + std::to_string(pos)), position(pos) {}
  std::size_t position;
};

class TooLong : public Error {
 public:
  TooLong(std::size_t length, std::size_t limit)
      : Error("sequence of length " + std::to_string(length) + " exceeds " + std::to_string(limit)) {}
};

class NoPadToken : public Error {
 public:
  NoPadToken() : Error("alphabet has no PAD token") {}
};

class TooLargeToEnumerate : public Error {
 public:
  explicit TooLargeToEnumerate(double size)
      : Error("search space of size " + std::to_string(size) + " is too large to enumerate") {}
};

class NonFiniteLoss : public Error {
 public:
  explicit NonFiniteLoss(std::size_t step)
      : Error("non-finite loss at step " + std::to_string(step)), step(step) {}
  std::size_t step;
};

class CorruptFile : public Error {
 public:
  CorruptFile(const std::string& what, std::size_t off)
      : Error("corrupt file at offset " + std::to_string(off) + ": " + what), offset(off) {}
  std::size_t offset;
};

class VersionMismatch : public Error {
 public:
  VersionMismatch(unsigned found, unsigned expected)
      : Error("format version " + std::to_string(found) + " found, expected " + std::to_string(expected)),
        found(found),
        expected(expected) {}
  unsigned found;
  unsigned expected;
};

/// Malformed text input (dataset, alphabet or config file); `line` is 1-based.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line(line) {}
  std::size_t line;
};

class DeadEnd : public Error {
 public:
  DeadEnd() : Error("no valid sequence exists: every first token is infeasible") {}
};

class EmptyRow : public Error {
 public:
  explicit EmptyRow(std::size_t step)
      : Error("decoder row " + std::to_string(step) + " has no positive weight"), step(step) {}
  std::size_t step;
};

class CorpusInvalidEntry : public Error {
 public:
  CorpusInvalidEntry(std::size_t index, const std::string& reason)
      : Error("corpus entry " + std::to_string(index) + " is invalid: " + reason), index(index) {}
  std::size_t index;
};

}  // namespace seqval
