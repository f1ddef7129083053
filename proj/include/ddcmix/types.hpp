#pragma once

#include <stdexcept>
#include <string>

namespace ddcmix {

/// Sentinel iteration count meaning "iterate until tolerance" (subject to a
/// hard safety cap chosen by the caller: the system dimension for GMRES,
/// 100 * dimension for fixed-point iterations).
inline constexpr int kInfIters = -1;

/// Diagnostics attached to every truncated-solver invocation.
struct SolverReport {
  int iterations_used = 0;
  double final_residual_norm = 0.0;
  bool converged = false;
  double wall_time = 0.0;  // seconds
};

/// Thrown when an iterative solver produces a non-finite iterate.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

/// Configuration or usage errors surfaced by factories and the harness.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when the M-step optimizer cannot make progress.
class MStepError : public std::runtime_error {
 public:
  MStepError(const std::string& what, double gradient_norm)
      : std::runtime_error(what), gradient_norm_(gradient_norm) {}
  double gradient_norm() const noexcept { return gradient_norm_; }

 private:
  double gradient_norm_;
};

}  // namespace ddcmix
