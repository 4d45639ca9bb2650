#pragma once

#include <stdexcept>
#include <string>

namespace plasticity {

// Model file / schema problems. CLI maps these to exit code 1.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Structurally invalid request (unknown trait, support not closed, mutant
// class overlapping residents, ...).
struct SupportError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Total event rate hit zero; the jump chain has no next event.
struct AbsorbedError : std::runtime_error {
  AbsorbedError() : std::runtime_error("population process absorbed (total rate = 0)") {}
};

// Numerical failures. CLI maps these to exit code 3.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StepSizeUnderflow : NumericalError {
  explicit StepSizeUnderflow(double t)
      : NumericalError("ODE step size underflow at t=" + std::to_string(t)) {}
};

struct IterationLimitError : NumericalError {
  using NumericalError::NumericalError;
};

struct NonIrreducibleError : NumericalError {
  using NumericalError::NumericalError;
};

// Post-invasion system failed to settle on a stable point.
struct NonConvergenceError : NumericalError {
  using NumericalError::NumericalError;
};

struct UnstableTargetError : NumericalError {
  using NumericalError::NumericalError;
};

// Evolution chain ran out of population.
struct ExtinctError : std::runtime_error {
  ExtinctError() : std::runtime_error("evolution chain reached an empty support") {}
};

}  // namespace plasticity
