#pragma once

#include <stdexcept>
#include <string>

namespace copem {

/// Linear algebra or special-function failure (non-PD matrix, singular block, ...).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Caller supplied an invalid configuration (too few observations, bad sizes, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Input file could not be parsed; message names the offending location.
class IngestionError : public std::runtime_error {
 public:
  explicit IngestionError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace copem
