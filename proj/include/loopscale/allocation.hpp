#pragma once

// Compute-optimal allocation and related closed-form quantities.

#include <functional>
#include <vector>

#include "loopscale/dataset.hpp"
#include "loopscale/geometry.hpp"
#include "loopscale/law.hpp"

namespace loopscale {

struct ParabolaFit {
  double n_star = 0.0;
  double l_star = 0.0;
  /// Coefficients of L = c0 + c1 x + c2 x^2 with x = log N - x_center.
  double c0 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double x_center = 0.0;
  /// The quadratic opens downward (c2 <= 0), so there is no vertex minimum;
  /// n_star and l_star are the best observed run instead.
  bool extrapolated = false;
};

struct IsoPoint {
  double n_params;
  double loss;
};

/// Least-squares quadratic of L against log N. Needs >= 3 distinct N.
ParabolaFit isoflops_parabola(const std::vector<IsoPoint>& points);
/// Same, with N the core unique parameter count of each run.
ParabolaFit isoflops_parabola(const std::vector<RunRecord>& cell_runs);

struct AllocationPoint {
  double budget = 0.0;
  double n_star = 0.0;
  double d_star = 0.0;
  double loss_star = 0.0;
  double width_star = 0.0;
  ParamSplit split;
};

/// The architecture whose width is being optimized. `layout` supplies r,
/// the layer partition, the injection and the context/vocab sizes; its
/// scale s is ignored.
struct AllocationSetup {
  ModelShape layout = ModelShape::baseline(1);
  TrainingRecipe recipe = TrainingRecipe::full();
  FlopsConvention convention = FlopsConvention::empirical;
};

/// Golden-section minimization of f on [lo, hi] to absolute tolerance `tol`.
double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double tol);

/// Minimizes predicted loss over continuous width at D = C / F_train(d).
/// A coarse scan in log d brackets the minimum, then golden section refines
/// it. Throws NumericError when the scanned profile has no interior minimum
/// or more than one.
AllocationPoint optimal_allocation(const JointParams& params, const AllocationSetup& setup,
                                   double budget);

/// Closed-form N* for F_train = 6N:  [alpha A / (beta B) (C/6)^beta]^(1/(alpha+beta)).
double closed_form_n_star(const ChinchillaParams& params, double budget);

struct Frontier {
  std::vector<AllocationPoint> points;
  double n_star_exponent = 0.0;  // least-squares slope of log N* on log C
};

Frontier frontier(const JointParams& params, const AllocationSetup& setup,
                  const std::vector<double>& budgets);

/// Least-squares slope of y on x.
double ols_slope(const std::vector<double>& x, const std::vector<double>& y);

/// a_D = beta / (alpha + beta).
double data_scaling_exponent(double alpha, double beta);

/// g_r = N_once/N + r^phi N_rec/N.
double recurrence_gain(const ModelShape& shape, double phi);
/// A g_r^-alpha.
double effective_amplitude(double amplitude, double alpha, double gain);

struct EquivalentSizes {
  double unique_ratio = 0.0;     // (n_prelude + n_recur + n_coda) / L_eff
  double effective_ratio = 0.0;  // (n_prelude + n_coda + r^phi n_recur) / L_eff
};

/// Layer-count ratios against the r = 1 model of the same width and depth,
/// ignoring the injection parameters.
EquivalentSizes equivalent_sizes(const ModelShape& layout, double phi);

}  // namespace loopscale
