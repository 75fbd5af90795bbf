#pragma once

#include <stdexcept>
#include <string>

namespace fsfc {

// Invalid configuration (bad parameter values, contradictory options). CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (datasets, model files). CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fsfc
