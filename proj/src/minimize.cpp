#include "loopscale/minimize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "loopscale/errors.hpp"

namespace loopscale {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

struct CurvaturePair {
  std::vector<double> s;
  std::vector<double> y;
  double rho;
};

// Two-loop recursion: returns -H q.
std::vector<double> lbfgs_direction(const std::deque<CurvaturePair>& memory,
                                    std::vector<double> q) {
  std::vector<double> alpha(memory.size());
  for (std::size_t k = memory.size(); k-- > 0;) {
    const CurvaturePair& p = memory[k];
    alpha[k] = p.rho * dot(p.s, q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha[k] * p.y[i];
  }
  if (!memory.empty()) {
    const CurvaturePair& last = memory.back();
    const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
    for (double& v : q) v *= gamma;
  }
  for (std::size_t k = 0; k < memory.size(); ++k) {
    const CurvaturePair& p = memory[k];
    const double beta = p.rho * dot(p.y, q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] += (alpha[k] - beta) * p.s[i];
  }
  for (double& v : q) v = -v;
  return q;
}

}  // namespace

bool Box::contains(std::span<const double> x) const {
  if (x.size() != size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= lower[i] && x[i] <= upper[i])) return false;
  }
  return true;
}

std::vector<double> Box::project(std::span<const double> x) const {
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], lower[i], upper[i]);
  return out;
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::gradient:
      return "gradient";
    case StopReason::step:
      return "step";
    case StopReason::stall:
      return "stall";
    case StopReason::max_iter:
      return "max_iter";
    case StopReason::line_search:
      return "line_search";
  }
  return "unknown";
}

double projected_gradient_norm(std::span<const double> x, std::span<const double> grad,
                               const Box& box) {
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double g = grad[i];
    if (x[i] <= box.lower[i]) g = std::min(g, 0.0);
    if (x[i] >= box.upper[i]) g = std::max(g, 0.0);
    m = std::max(m, std::abs(g));
  }
  return m;
}

MinimizeResult minimize_bounded(const ObjectiveFn& fn, const Box& box, std::vector<double> x0,
                                const MinimizeOptions& options) {
  const std::size_t n = box.size();
  if (box.upper.size() != n || x0.size() != n) throw UsageError("box and start point sizes differ");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(box.lower[i] < box.upper[i])) throw UsageError("box needs lower < upper per coordinate");
  }
  if (!box.contains(x0)) throw UsageError("start point lies outside the box");
  if (options.max_iter < 0 || !(options.grad_tol > 0.0) || !(options.step_tol > 0.0) ||
      options.memory < 1 || !(options.f_tol >= 0.0)) {
    throw UsageError("invalid minimizer options");
  }

  MinimizeResult res;
  res.x = std::move(x0);
  std::vector<double> g(n);
  res.f = fn(res.x, g);
  res.evaluations = 1;
  if (!std::isfinite(res.f) || !all_finite(g)) {
    throw NumericError("objective is not finite at the start point");
  }

  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 60;
  std::deque<CurvaturePair> memory;
  int stalled = 0;
  std::vector<double> x_trial(n), g_trial(n), step(n);

  while (true) {
    res.projected_gradient = projected_gradient_norm(res.x, g, box);
    if (res.projected_gradient < options.grad_tol) {
      res.status = StopReason::gradient;
      return res;
    }
    if (res.iterations >= options.max_iter) {
      res.status = StopReason::max_iter;
      return res;
    }

    // Variables pinned at a bound by the gradient stay put this iteration.
    std::vector<bool> pinned(n, false);
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) {
      pinned[i] = (res.x[i] <= box.lower[i] && g[i] > 0.0) || (res.x[i] >= box.upper[i] && g[i] < 0.0);
      q[i] = pinned[i] ? 0.0 : g[i];
    }

    bool accepted = false;
    double f_trial = 0.0;
    // First attempt uses the quasi-Newton direction; on failure, steepest
    // descent with fresh memory.
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      if (attempt == 1) {
        if (memory.empty()) break;
        memory.clear();
      }
      std::vector<double> d = lbfgs_direction(memory, q);
      for (std::size_t i = 0; i < n; ++i) {
        if (pinned[i]) d[i] = 0.0;
      }
      if (!(dot(g, d) < 0.0) || !all_finite(d)) {
        memory.clear();
        d = lbfgs_direction(memory, q);
      }
      double t = 1.0;
      if (memory.empty()) t = 1.0 / std::max(1.0, std::sqrt(dot(d, d)));
      for (int k = 0; k < kMaxBacktracks; ++k, t *= 0.5) {
        for (std::size_t i = 0; i < n; ++i) {
          x_trial[i] = std::clamp(res.x[i] + t * d[i], box.lower[i], box.upper[i]);
          step[i] = x_trial[i] - res.x[i];
        }
        const double slope = dot(g, step);
        if (inf_norm(step) == 0.0) break;
        if (!(slope < 0.0)) continue;
        f_trial = fn(x_trial, g_trial);
        ++res.evaluations;
        if (std::isfinite(f_trial) && all_finite(g_trial) && f_trial <= res.f + kArmijo * slope) {
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) {
      res.status = StopReason::line_search;
      return res;
    }

    ++res.iterations;
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = g_trial[i] - g[i];
    const double sy = dot(step, y);
    if (sy > 1e-16 * dot(y, y) && sy > 0.0) {
      memory.push_back({step, y, 1.0 / sy});
      if (memory.size() > static_cast<std::size_t>(options.memory)) memory.pop_front();
    }
    const double rel_step = inf_norm(step) / std::max(1.0, inf_norm(res.x));
    const double rel_drop =
        (res.f - f_trial) / std::max({std::abs(res.f), std::abs(f_trial), 1e-300});
    stalled = rel_drop < options.f_tol ? stalled + 1 : 0;
    res.x = x_trial;
    res.f = f_trial;
    g = g_trial;
    if (rel_step < options.step_tol) {
      res.projected_gradient = projected_gradient_norm(res.x, g, box);
      res.status = StopReason::step;
      return res;
    }
    if (stalled >= options.stall_iterations) {
      res.projected_gradient = projected_gradient_norm(res.x, g, box);
      res.status = StopReason::stall;
      return res;
    }
  }
}

}  // namespace loopscale
