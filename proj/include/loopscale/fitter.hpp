#pragma once

// Multi-restart robust fits of the Chinchilla and joint laws.

#include <cstdint>
#include <string>
#include <vector>

#include "loopscale/dataset.hpp"
#include "loopscale/law.hpp"
#include "loopscale/minimize.hpp"

namespace loopscale {

struct Interval {
  double lo;
  double hi;
};

struct FitBounds {
  Interval a{-5.0, 35.0};
  Interval alpha{0.0, 2.5};
  Interval b{-5.0, 35.0};
  Interval beta{0.0, 2.5};
  Interval e{-3.0, 2.0};
  Interval phi{-3.0, 3.0};

  void validate() const;
  /// Box over (a, alpha, b, beta, e[, phi]).
  Box box(bool with_phi) const;
};

struct FitConfig {
  int restarts = 500;
  int max_iter = 10000;
  double huber_delta = 1e-3;
  std::uint64_t seed = 0;
  double grad_tol = 1e-9;
  double step_tol = 1e-12;
  double f_tol = 1e-10;
  int memory = 10;
  /// Worker threads for the restart loop; 0 uses every hardware thread.
  /// Results do not depend on it.
  unsigned threads = 0;
  FitBounds bounds;

  void validate() const;
};

enum class LawForm { chinchilla, joint };

struct PhiMode {
  bool is_free = true;
  double value = 0.0;  // used when !is_free

  static PhiMode free() { return {true, 0.0}; }
  static PhiMode fixed(double phi) { return {false, phi}; }
};

struct FitResult {
  LawForm form = LawForm::joint;
  PhiMode phi_mode;
  JointParams params;
  double objective = 0.0;       // Huber sum
  double objective_mean = 0.0;  // Huber sum / n_runs
  double r2 = 0.0;
  std::size_t n_runs = 0;
  std::vector<double> restart_objectives;  // +inf marks a failed restart
  std::size_t winning_restart = 0;
  StopReason status = StopReason::max_iter;
  int iterations = 0;
  double projected_gradient = 0.0;
};

std::vector<Observation> observations(const std::vector<RunRecord>& runs);

/// Requires >= 6 runs spanning more than one N and more than one D.
FitResult fit_chinchilla(const std::vector<RunRecord>& runs, const FitConfig& config);

/// Free mode also requires more than one distinct r.
FitResult fit_joint(const std::vector<RunRecord>& runs, const FitConfig& config, PhiMode phi_mode);

/// Shared core of both fits, on prepared observations. Starts are drawn
/// uniformly in the box from restart-indexed seed streams; the lowest
/// objective wins, ties to the lowest restart index.
FitResult fit_observations(std::vector<Observation> obs, const FitConfig& config, LawForm form,
                           PhiMode phi_mode);

/// Throws UsageError/IdentifiabilityError when a fit of this kind cannot
/// identify its parameters on `obs`.
void check_identifiable(const std::vector<Observation>& obs, LawForm form, PhiMode phi_mode);

std::string to_string(LawForm form);

}  // namespace loopscale
