#pragma once

#include <stdexcept>
#include <string>

namespace spinn {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when the power-flow iteration fails to reach the mismatch tolerance.
// Carries the last mismatch norm so callers (e.g. rejection sampling) can log it.
struct PowerFlowDiverged : Error {
  PowerFlowDiverged(const std::string& msg, double mismatch, int iterations)
      : Error(msg), mismatch(mismatch), iterations(iterations) {}
  double mismatch;
  int iterations;
};

// Raised when the adaptive integrator drives the step size below h_min.
// Carries the time actually reached.
struct StepUnderflow : Error {
  StepUnderflow(const std::string& msg, double t_reached)
      : Error(msg), t_reached(t_reached) {}
  double t_reached;
};

// Raised when a training run encounters a non-finite loss.  Carries the epoch
// at which the last finite state was observed; the caller owns checkpointing.
struct TrainingAborted : Error {
  TrainingAborted(const std::string& msg, int last_finite_epoch)
      : Error(msg), last_finite_epoch(last_finite_epoch) {}
  int last_finite_epoch;
};

}  // namespace spinn
