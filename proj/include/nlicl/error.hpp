#pragma once

#include <stdexcept>
#include <string>

namespace nlicl {

// Base of every error the harness raises. The CLI maps the concrete type to
// an exit code (see tools/nlicl.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration, arguments, or precondition violations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (dataset files, index files, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Failures talking to a model or embedding endpoint.
class BackendError : public Error {
 public:
  using Error::Error;
  BackendError(const std::string& what, bool retryable)
      : Error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_ = false;
};

// An internal consistency check failed (e.g. a stored aggregate disagrees
// with the records it summarizes).
class AssertionError : public Error {
 public:
  using Error::Error;
};

}  // namespace nlicl
