#pragma once

#include <stdexcept>
#include <string>

namespace swsysid {

// A documented precondition was violated (bad dimensions, non-finite
// entries, malformed configuration, ...).
class InvalidInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation that is well defined on paper degenerated numerically,
// e.g. a rank-one update denominator that must be positive is not.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A simulated state crossed the overflow guard. Carries the first time
// index whose state exceeded the guard.
class InstabilityError : public std::runtime_error {
 public:
  InstabilityError(const std::string& msg, long step)
      : std::runtime_error(msg), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace swsysid
