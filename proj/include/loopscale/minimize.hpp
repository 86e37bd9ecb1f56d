#pragma once

// Box-constrained limited-memory quasi-Newton minimization.
//
// Each iteration fixes the variables held at a bound by the gradient, builds
// an L-BFGS direction on the rest, and backtracks along the projected path
// P(x + t d) until the Armijo condition holds.

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace loopscale {

struct Box {
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t size() const { return lower.size(); }
  bool contains(std::span<const double> x) const;
  std::vector<double> project(std::span<const double> x) const;
};

/// f(x) with the gradient written into `grad`.
using ObjectiveFn = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct MinimizeOptions {
  int max_iter = 10000;
  double grad_tol = 1e-9;   // infinity norm of the projected gradient
  double step_tol = 1e-12;  // ||dx||_inf / max(1, ||x||_inf)
  /// Relative objective decrease (f_k - f_k+1) / max(|f_k|, |f_k+1|, 1e-300)
  /// below which an iteration counts as stalled.
  double f_tol = 1e-10;
  /// Consecutive stalled iterations that end the run.
  int stall_iterations = 5;
  int memory = 10;
};

enum class StopReason { gradient, step, stall, max_iter, line_search };

std::string to_string(StopReason reason);

struct MinimizeResult {
  std::vector<double> x;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
  StopReason status = StopReason::max_iter;
  double projected_gradient = 0.0;
};

/// Infinity norm of the gradient after zeroing components that point out of
/// the box at an active bound.
double projected_gradient_norm(std::span<const double> x, std::span<const double> grad,
                               const Box& box);

/// Throws UsageError if x0 lies outside the box and NumericError if f(x0) or
/// its gradient is not finite. The returned f never exceeds f(x0).
MinimizeResult minimize_bounded(const ObjectiveFn& fn, const Box& box, std::vector<double> x0,
                                const MinimizeOptions& options = {});

}  // namespace loopscale
