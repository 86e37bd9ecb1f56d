#pragma once

// Uncertainty and comparison for the recurrence-equivalence exponent phi.

#include <cstdint>
#include <vector>

#include "loopscale/dataset.hpp"
#include "loopscale/fitter.hpp"

namespace loopscale {

struct BootstrapOptions {
  int resamples = 200;
  std::uint64_t seed = 0;
  /// Restarts per resample refit; the full-data fit uses the FitConfig's own.
  int resample_restarts = 50;
  /// Redraws allowed per resample when a draw leaves phi unidentifiable.
  int max_redraws = 1000;
};

struct BootstrapResult {
  FitResult point_fit;
  double phi_point = 0.0;
  std::vector<double> phi_samples;  // resample order
  double ci_low = 0.0;              // 2.5th percentile
  double ci_high = 0.0;             // 97.5th percentile
  int n_resamples = 0;
  std::uint64_t seed = 0;
  std::size_t n_cells = 0;
  int redraws = 0;
};

/// Linear-interpolation percentile of an ascending sample, q in [0, 1].
double percentile_sorted(const std::vector<double>& sorted, double q);

/// Block bootstrap over (budget, r) cells: each resample draws as many cells
/// as exist, with replacement, and refits the joint law with phi free.
/// Deterministic given options.seed, whatever the thread count.
BootstrapResult block_bootstrap_phi(const std::vector<RunRecord>& runs, const FitConfig& fit_config,
                                    const BootstrapOptions& options);

struct SplitStability {
  double threshold = 0.0;
  FitResult low;   // C <= threshold
  FitResult high;  // C > threshold
  double phi_low() const { return low.params.phi; }
  double phi_high() const { return high.params.phi; }
};

/// Budgets are compared at three significant figures, like cell keys.
SplitStability split_stability(const std::vector<RunRecord>& runs, double budget_threshold,
                               const FitConfig& config);

struct DeltaPhiReport {
  FitResult base;
  FitResult probe;
  double delta = 0.0;  // phi_probe - phi_base
  std::size_t base_r1_runs = 0;
  std::size_t probe_r1_runs = 0;
  /// r = 1 runs of the probe set also present in the baseline.
  std::size_t shared_r1_runs = 0;
  /// Both sets have r = 1 runs and those runs coincide.
  bool shares_r1 = false;
};

DeltaPhiReport delta_phi(const std::vector<RunRecord>& baseline, const std::vector<RunRecord>& probe,
                         const FitConfig& config);

}  // namespace loopscale
