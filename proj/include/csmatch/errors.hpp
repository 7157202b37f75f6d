#pragma once

#include <stdexcept>
#include <string>

namespace csmatch {

// Base class for all errors raised by the toolkit.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A domain object violates one of its invariants (bad row sum, bad index...).
struct ValidationError : Error {
  using Error::Error;
};

// An experiment or sweep configuration is rejected before anything runs.
// The message names the offending field.
struct ConfigError : Error {
  using Error::Error;
};

// An operation was called outside its stated precondition.
struct PreconditionError : Error {
  using Error::Error;
};

// A client block of a mixed strategy vector sums to zero; the normalization
// step is undefined there.
struct DegenerateStrategyError : Error {
  using Error::Error;
};

// File reading/writing failed.
struct IoError : Error {
  using Error::Error;
};

}  // namespace csmatch
