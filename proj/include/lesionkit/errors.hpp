#pragma once

#include <stdexcept>
#include <string>

namespace lesionkit {

/// Invalid run configuration or CLI usage. Maps to exit status 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Problem with input data (missing files, empty classes, malformed tables).
/// Maps to exit status 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BadImageError : public DataError {
 public:
  explicit BadImageError(const std::string& what) : DataError("bad image: " + what) {}
};

class InvalidMetricError : public std::invalid_argument {
 public:
  InvalidMetricError() : std::invalid_argument("invalid metric") {}
};

}  // namespace lesionkit
