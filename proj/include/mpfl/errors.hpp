#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mpfl {

/// Invalid shapes, layouts or experiment settings.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A consensus or pruning constraint that cannot be satisfied.
class ConstraintError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed wire data. `offset` is the byte position where decoding stopped.
class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), reason_(what), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string reason_;
  std::size_t offset_;
};

/// Connection loss or socket failure.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed dataset file. `line` is 1-based for text formats, a byte offset for binary ones.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line/offset " + std::to_string(line) + ")"), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Failure while running an experiment, tagged with the round it happened in.
class RunError : public std::runtime_error {
 public:
  RunError(const std::string& what, std::uint32_t round)
      : std::runtime_error("round " + std::to_string(round) + ": " + what), round_(round) {}

  std::uint32_t round() const noexcept { return round_; }

 private:
  std::uint32_t round_;
};

}  // namespace mpfl
