#pragma once

#include <stdexcept>
#include <string>

namespace damsl {

// Shape mismatches between matrices / parameter blocks.
struct shape_error : std::runtime_error {
  explicit shape_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed files (CSV banks, checkpoints).
struct format_error : std::runtime_error {
  explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Episode protocol cannot be satisfied (too few classes / samples / nodes).
struct protocol_error : std::runtime_error {
  explicit protocol_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration values or unknown keys.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Out-of-range class labels or indices.
struct index_error : std::runtime_error {
  explicit index_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Backward pass attempted with a tape recorded before a parameter update.
struct stale_tape_error : std::runtime_error {
  explicit stale_tape_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace damsl
