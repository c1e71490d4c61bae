#pragma once

#include <stdexcept>
#include <string>

namespace lorats {

// Base of every exception the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on an argument was violated (bad PhyParams, out-of-range symbol, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// An onset detector could not locate a preamble in the trace.
class NoOnsetError : public Error {
 public:
  using Error::Error;
};

// File, sidecar or record format problems.
class DataError : public Error {
 public:
  using Error::Error;
};

// A fitted model cannot be used (zero temperature spread, flat slope, ...).
class ModelError : public Error {
 public:
  using Error::Error;
};

// Interval hopping verifier lost track of the device schedule.
class ResyncRequired : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace lorats
