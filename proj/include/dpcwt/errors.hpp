#pragma once

#include <stdexcept>

namespace dpcwt {

// Invalid configuration or input data. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem or serialization failure. The CLI maps this to exit code 3.
class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dpcwt
