#pragma once

#include <stdexcept>
#include <string>

namespace mempoet {

// Caller passed arguments that violate an operation's precondition.
struct UsageError : std::invalid_argument {
  explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

// Bad or unreadable input data (files, records, token sequences).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Inconsistent run configuration (missing artifacts, fingerprint mismatch).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mempoet
