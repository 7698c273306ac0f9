#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace s2pc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Arithmetic misuse: modulus mismatch, missing inverse, bad serialization.
class RingError : public Error {
 public:
  using Error::Error;
};

/// A controller or plant violates one of the standing assumptions
/// (fixed-point representability, closed-loop stability, observability).
class AssumptionViolation : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Parameter selection could not satisfy the bounds.
class PlanError : public Error {
 public:
  using Error::Error;
};

/// Raised when a protocol run cannot continue: reused auxiliary material,
/// a missing or malformed message, an exhausted PRF counter domain.
class ProtocolAbort : public Error {
 public:
  explicit ProtocolAbort(const std::string& what, long step = -1)
      : Error(step >= 0 ? "step " + std::to_string(step) + ": " + what : what),
        step_(step) {}

  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace s2pc
