#pragma once

#include <stdexcept>
#include <string>

namespace rmabm {

// Invalid or inconsistent configuration (bad parameter values, missing
// config keys, incompatible experiment settings).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Internal bookkeeping broke an accounting identity. This is a bug, not a
// recoverable condition.
class IntegrityError : public std::logic_error {
 public:
  explicit IntegrityError(const std::string& what) : std::logic_error(what) {}
};

// File-format or filesystem failure while reading/writing artifacts.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rmabm
