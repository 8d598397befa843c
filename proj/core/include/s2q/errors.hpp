#pragma once

#include <stdexcept>
#include <string>

namespace s2q {

// Root of every error the library throws. Callers that only need to know
// "something went wrong" catch this; the CLI maps it to a nonzero exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration: bad field values, inconsistent sizes, missing files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A call whose preconditions do not hold (wrong vector length, bad index).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Non-finite losses or gradients.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Malformed environment or checkpoint files. The message names the field path.
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace s2q
