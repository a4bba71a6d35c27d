#pragma once

#include <stdexcept>
#include <string>

namespace gbdtnas {

// Base of every error raised by the library. The CLI maps the subclasses
// onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed schema, config, or input file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Unknown architecture, conflicting table rows, exhausted budget.
class OracleError : public Error {
 public:
  using Error::Error;
};

// An internal invariant (local accuracy, cover consistency, ...) failed.
class InvariantError : public Error {
 public:
  using Error::Error;
};

// Normalizer spread is zero; the caller may fall back to a constant predictor.
class DegenerateSpread : public Error {
 public:
  using Error::Error;
};

// Rejection sampling under pair constraints ran out of attempts.
class OverPruned : public Error {
 public:
  using Error::Error;
};

// Enumeration or brute-force work exceeds the caller's cap.
class CapExceeded : public Error {
 public:
  using Error::Error;
};

}  // namespace gbdtnas
