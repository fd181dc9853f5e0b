#pragma once

#include <stdexcept>
#include <string>

namespace modelmon {

/// Bad input value (non-finite number, dimension mismatch, bad label).
class ValueError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Not enough observations to compute a statistic.
class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed document or file. The message names the offending field or row.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (out-of-range knobs, unsupported cadence, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace modelmon
