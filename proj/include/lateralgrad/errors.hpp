#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lateralgrad {

// Bad wiring: shapes that don't compose, invalid hyperparameters, unknown keys.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse at runtime (backward on a consumed tape, too few samples, ...).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input bytes. Carries the offset at which decoding failed.
struct FormatError : std::runtime_error {
  FormatError(const std::string& msg, std::size_t byte_offset)
      : std::runtime_error(msg + " (at byte offset " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where the math contract requires finite ones.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lateralgrad
