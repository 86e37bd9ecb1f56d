#include "loopscale/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "loopscale/errors.hpp"

namespace loopscale {

namespace {

constexpr double kScanLogWidthLo = -1.0;  // d from e^-1
constexpr double kScanLogWidthHi = 17.0;  // to e^17 ~ 2.4e7
constexpr int kScanPoints = 721;

struct Profile {
  const JointParams& params;
  const AllocationSetup& setup;
  double budget;

  double tokens_at(double width) const {
    return budget / train_flops_at(setup.layout, width, setup.recipe, setup.convention);
  }

  double loss_at_log_width(double log_width) const {
    const double width = std::exp(log_width);
    const ParamSplit split = param_split_at(setup.layout, width);
    return predict_loss(params, LawInputs{split.once, split.recurrent,
                                          static_cast<double>(setup.layout.r), tokens_at(width)});
  }
};

}  // namespace

ParabolaFit isoflops_parabola(const std::vector<IsoPoint>& points) {
  std::set<double> distinct;
  for (const IsoPoint& p : points) {
    if (!(p.n_params > 0.0) || !std::isfinite(p.loss)) {
      throw DomainError("iso-FLOPs points need N > 0 and finite loss");
    }
    distinct.insert(p.n_params);
  }
  if (distinct.size() < 3) {
    throw UsageError("a parabola needs at least 3 distinct parameter counts, got " +
                     std::to_string(distinct.size()));
  }
  ParabolaFit fit;
  for (const IsoPoint& p : points) fit.x_center += std::log(p.n_params);
  fit.x_center /= static_cast<double>(points.size());

  // Normal equations for (c0, c1, c2) on centred x.
  double s[5] = {0, 0, 0, 0, 0};
  double t[3] = {0, 0, 0};
  for (const IsoPoint& p : points) {
    const double x = std::log(p.n_params) - fit.x_center;
    double xp = 1.0;
    for (int k = 0; k < 5; ++k, xp *= x) {
      s[k] += xp;
      if (k < 3) t[k] += xp * p.loss;
    }
  }
  double m[3][4] = {{s[0], s[1], s[2], t[0]}, {s[1], s[2], s[3], t[1]}, {s[2], s[3], s[4], t[2]}};
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int row = col + 1; row < 3; ++row) {
      if (std::abs(m[row][col]) > std::abs(m[pivot][col])) pivot = row;
    }
    for (int k = 0; k < 4; ++k) std::swap(m[col][k], m[pivot][k]);
    for (int row = 0; row < 3; ++row) {
      if (row == col) continue;
      const double factor = m[row][col] / m[col][col];
      for (int k = col; k < 4; ++k) m[row][k] -= factor * m[col][k];
    }
  }
  fit.c0 = m[0][3] / m[0][0];
  fit.c1 = m[1][3] / m[1][1];
  fit.c2 = m[2][3] / m[2][2];

  if (fit.c2 > 0.0) {
    const double x_star = -fit.c1 / (2.0 * fit.c2);
    fit.n_star = std::exp(fit.x_center + x_star);
    fit.l_star = fit.c0 + fit.c1 * x_star + fit.c2 * x_star * x_star;
  } else {
    const auto best = std::min_element(points.begin(), points.end(),
                                       [](const IsoPoint& a, const IsoPoint& b) { return a.loss < b.loss; });
    fit.n_star = best->n_params;
    fit.l_star = best->loss;
    fit.extrapolated = true;
  }
  return fit;
}

ParabolaFit isoflops_parabola(const std::vector<RunRecord>& cell_runs) {
  std::vector<IsoPoint> points;
  points.reserve(cell_runs.size());
  for (const RunRecord& run : cell_runs) points.push_back({unique_params(run.shape), run.val_loss});
  return isoflops_parabola(points);
}

double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  while (hi - lo > tol) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    }
  }
  return f1 <= f2 ? x1 : x2;
}

AllocationPoint optimal_allocation(const JointParams& params, const AllocationSetup& setup,
                                   double budget) {
  if (!(budget > 0.0) || !std::isfinite(budget)) throw DomainError("budget must be positive");
  if (!(params.law.alpha > 0.0) || !(params.law.beta > 0.0)) {
    throw DomainError("compute-optimal allocation needs alpha > 0 and beta > 0");
  }
  ModelShape layout = setup.layout;
  layout.s = 1;
  layout.validate();
  setup.recipe.validate_for(layout);
  AllocationSetup fixed = setup;
  fixed.layout = layout;
  const Profile profile{params, fixed, budget};

  std::vector<double> xs(kScanPoints), ls(kScanPoints);
  for (int i = 0; i < kScanPoints; ++i) {
    xs[i] = kScanLogWidthLo + (kScanLogWidthHi - kScanLogWidthLo) * i / (kScanPoints - 1);
    ls[i] = profile.loss_at_log_width(xs[i]);
  }
  const auto min_it = std::min_element(ls.begin(), ls.end());
  const auto imin = static_cast<int>(min_it - ls.begin());
  auto diagnostics = [&] {
    return " (budget " + std::to_string(budget) + ", scanned d in [" +
           std::to_string(std::exp(kScanLogWidthLo)) + ", " + std::to_string(std::exp(kScanLogWidthHi)) +
           "], best scanned d " + std::to_string(std::exp(xs[imin])) + ", loss " +
           std::to_string(ls[imin]) + ")";
  };
  if (imin == 0 || imin == kScanPoints - 1) {
    throw NumericError("optimal width is not bracketed by the scan" + diagnostics());
  }
  // Unimodal: differences go (-)* then (+)*.
  bool rising = false;
  for (int i = 1; i < kScanPoints; ++i) {
    const double diff = ls[i] - ls[i - 1];
    if (diff > 0.0) rising = true;
    if (diff < 0.0 && rising) {
      throw NumericError("loss profile over width is not unimodal" + diagnostics());
    }
  }

  const double log_width = golden_section_minimize(
      [&](double x) { return profile.loss_at_log_width(x); }, xs[imin - 1], xs[imin + 1], 1e-11);
  AllocationPoint point;
  point.budget = budget;
  point.width_star = std::exp(log_width);
  point.split = param_split_at(layout, point.width_star);
  point.n_star = point.split.total();
  point.d_star = profile.tokens_at(point.width_star);
  point.loss_star = predict_loss(params, LawInputs{point.split.once, point.split.recurrent,
                                                   static_cast<double>(layout.r), point.d_star});
  return point;
}

double closed_form_n_star(const ChinchillaParams& p, double budget) {
  const double ratio = p.alpha * p.amplitude_a() / (p.beta * p.amplitude_b());
  return std::pow(ratio * std::pow(budget / 6.0, p.beta), 1.0 / (p.alpha + p.beta));
}

double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw UsageError("slope needs >= 2 paired points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw UsageError("slope needs more than one distinct x");
  return sxy / sxx;
}

Frontier frontier(const JointParams& params, const AllocationSetup& setup,
                  const std::vector<double>& budgets) {
  if (budgets.size() < 2) throw UsageError("a frontier needs at least 2 budgets");
  Frontier out;
  std::vector<double> log_c, log_n;
  for (double c : budgets) {
    out.points.push_back(optimal_allocation(params, setup, c));
    log_c.push_back(std::log(c));
    log_n.push_back(std::log(out.points.back().n_star));
  }
  out.n_star_exponent = ols_slope(log_c, log_n);
  return out;
}

double data_scaling_exponent(double alpha, double beta) {
  if (alpha + beta == 0.0) throw DomainError("alpha + beta must be nonzero");
  return beta / (alpha + beta);
}

double recurrence_gain(const ModelShape& shape, double phi) {
  const ParamSplit split = param_split(shape);
  return (split.once + std::pow(static_cast<double>(shape.r), phi) * split.recurrent) / split.total();
}

double effective_amplitude(double amplitude, double alpha, double gain) {
  if (!(gain > 0.0)) throw DomainError("recurrence gain g_r must be positive");
  return amplitude * std::pow(gain, -alpha);
}

EquivalentSizes equivalent_sizes(const ModelShape& layout, double phi) {
  ModelShape shape = layout;
  shape.s = 1;
  shape.validate();
  const double depth = shape.l_eff;
  const double fixed_layers = shape.n_prelude + shape.n_coda;
  return {(fixed_layers + shape.n_recur()) / depth,
          (fixed_layers + std::pow(static_cast<double>(shape.r), phi) * shape.n_recur()) / depth};
}

}  // namespace loopscale
