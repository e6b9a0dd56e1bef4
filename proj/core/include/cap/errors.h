#pragma once

#include <stdexcept>
#include <string>

namespace cap {

// Base of every error the engine raises. The CLI maps the subclasses onto
// exit codes (usage = 1, data = 2, numerical = 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input: bad files, dimension mismatches, duplicate ids.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or argument outside an operation's domain.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced during evaluation or training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace cap
