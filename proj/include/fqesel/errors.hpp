#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fqesel {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Infinite horizon with gamma = 1, or a malformed horizon.
class InvalidHorizon : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Sufficient-exploration violation: the policy reaches a state-action pair
/// that the query distribution never samples.
class AssumptionViolation : public Error {
 public:
  AssumptionViolation(std::size_t step, std::size_t state, std::size_t action)
      : Error("sufficient exploration violated: P_" + std::to_string(step) + "(s=" +
              std::to_string(state) + ", a=" + std::to_string(action) + ") > 0 but mu = 0"),
        step_(step),
        state_(state),
        action_(action) {}

  std::size_t step() const noexcept { return step_; }
  std::size_t state() const noexcept { return state_; }
  std::size_t action() const noexcept { return action_; }

 private:
  std::size_t step_;
  std::size_t state_;
  std::size_t action_;
};

class SingularSystem : public Error {
 public:
  using Error::Error;
};

class KernelNotPsd : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fqesel
