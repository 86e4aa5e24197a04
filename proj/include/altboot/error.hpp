#pragma once

#include <stdexcept>
#include <string>

namespace altboot {

/// Base for every error raised by the library. The CLI maps the concrete
/// subclass to its exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Failure while running an otherwise valid job (exit code 4).
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace altboot
