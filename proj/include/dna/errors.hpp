#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dna {

/// Tensor or layer shapes that do not fit together.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values where finite ones are required (NaN inputs, diverged training).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad variant names, out-of-range hyper-parameters, unknown keys.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Unreadable or malformed data files. Carries the byte offset (for binary
/// formats) or the 1-based line number (for text formats) when known.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what, std::int64_t byte_offset = -1, int line = -1)
      : std::runtime_error(what), byte_offset_(byte_offset), line_(line) {}

  std::int64_t byte_offset() const noexcept { return byte_offset_; }
  int line() const noexcept { return line_; }

 private:
  std::int64_t byte_offset_;
  int line_;
};

}  // namespace dna
