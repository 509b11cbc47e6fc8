#pragma once

#include <stdexcept>
#include <string>

namespace slt {

/// Invalid configuration or arguments (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape mismatch inside the autodiff engine or a model call.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// First Fourier mode too small to define a phase.
class DegeneratePhase : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Runtime divergence (CLI exit code 3). Base for solver and emulator blowups.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SolverBlowup : public DivergenceError {
 public:
  SolverBlowup(double t, const std::string& what)
      : DivergenceError("solver blowup at t=" + std::to_string(t) + ": " + what), time_(t) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

class RolloutDiverged : public DivergenceError {
 public:
  RolloutDiverged(long member, long step)
      : DivergenceError("rollout diverged" +
                        (member >= 0 ? " in member " + std::to_string(member) : std::string()) +
                        " at step " + std::to_string(step)),
        member_(member),
        step_(step) {}
  long member() const noexcept { return member_; }
  long step() const noexcept { return step_; }

 private:
  long member_;
  long step_;
};

class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(long epoch, long batch)
      : DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(batch)),
        batch_(batch) {}
  long batch() const noexcept { return batch_; }

 private:
  long batch_;
};

/// File and container errors (CLI exit code 4).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class BadMagic : public IoError {
 public:
  using IoError::IoError;
};
class UnsupportedVersion : public IoError {
 public:
  using IoError::IoError;
};
class TruncatedPayload : public IoError {
 public:
  using IoError::IoError;
};
class CorruptHeader : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace slt
