#include "loopscale/fitter.hpp"

#include <cmath>
#include <limits>
#include <set>

#include "loopscale/errors.hpp"
#include "loopscale/parallel.hpp"
#include "loopscale/rng.hpp"

namespace loopscale {

namespace {

struct RestartOutcome {
  std::vector<double> x;
  double objective = std::numeric_limits<double>::infinity();
  StopReason status = StopReason::max_iter;
  int iterations = 0;
  double projected_gradient = 0.0;
};

}  // namespace

void FitBounds::validate() const {
  for (const Interval& iv : {a, alpha, b, beta, e, phi}) {
    if (!(iv.lo < iv.hi)) throw UsageError("fit bounds need lower < upper per coordinate");
  }
}

Box FitBounds::box(bool with_phi) const {
  Box box{{a.lo, alpha.lo, b.lo, beta.lo, e.lo}, {a.hi, alpha.hi, b.hi, beta.hi, e.hi}};
  if (with_phi) {
    box.lower.push_back(phi.lo);
    box.upper.push_back(phi.hi);
  }
  return box;
}

void FitConfig::validate() const {
  if (restarts < 1) throw UsageError("restarts must be >= 1");
  if (max_iter < 1) throw UsageError("max_iter must be >= 1");
  if (!(huber_delta > 0.0)) throw UsageError("Huber delta must be positive");
  if (!(grad_tol > 0.0) || !(step_tol > 0.0)) throw UsageError("tolerances must be positive");
  bounds.validate();
}

std::vector<Observation> observations(const std::vector<RunRecord>& runs) {
  std::vector<Observation> obs;
  obs.reserve(runs.size());
  for (const RunRecord& run : runs) obs.push_back(run.observation());
  return obs;
}

void check_identifiable(const std::vector<Observation>& obs, LawForm form, PhiMode phi_mode) {
  if (obs.size() < 6) {
    throw UsageError("a fit needs at least 6 runs, got " + std::to_string(obs.size()));
  }
  std::set<double> n_values, d_values, r_values;
  for (const Observation& o : obs) {
    n_values.insert(o.n_once + o.n_rec);
    d_values.insert(o.tokens);
    r_values.insert(o.r);
  }
  if (n_values.size() < 2) throw UsageError("runs must span more than one parameter count");
  if (d_values.size() < 2) throw UsageError("runs must span more than one token count");
  if (form == LawForm::joint && phi_mode.is_free && r_values.size() < 2) {
    throw IdentifiabilityError("phi is unidentifiable: every run has the same recurrence count");
  }
}

FitResult fit_observations(std::vector<Observation> obs, const FitConfig& config, LawForm form,
                           PhiMode phi_mode) {
  config.validate();
  if (form == LawForm::chinchilla) phi_mode = PhiMode::fixed(0.0);
  check_identifiable(obs, form, phi_mode);
  if (!phi_mode.is_free && !std::isfinite(phi_mode.value)) throw UsageError("fixed phi must be finite");

  const HuberLogObjective objective_fn(std::move(obs), config.huber_delta, phi_mode.is_free,
                                       phi_mode.value);
  const Box box = config.bounds.box(phi_mode.is_free);
  MinimizeOptions options;
  options.max_iter = config.max_iter;
  options.grad_tol = config.grad_tol;
  options.step_tol = config.step_tol;
  options.f_tol = config.f_tol;
  options.memory = config.memory;
  const ObjectiveFn fn = [&objective_fn](std::span<const double> x, std::span<double> g) {
    return objective_fn(x, g);
  };

  std::vector<RestartOutcome> outcomes(static_cast<std::size_t>(config.restarts));
  parallel_for(outcomes.size(), config.threads, [&](std::size_t i) {
    Rng rng(derive_seed(config.seed, kRestartStream + i));
    std::vector<double> x0(box.size());
    for (std::size_t k = 0; k < x0.size(); ++k) x0[k] = rng.uniform(box.lower[k], box.upper[k]);
    try {
      MinimizeResult m = minimize_bounded(fn, box, std::move(x0), options);
      if (std::isfinite(m.f)) {
        outcomes[i] = {std::move(m.x), m.f, m.status, m.iterations, m.projected_gradient};
      }
    } catch (const NumericError&) {
      // Recorded as a failed restart (objective stays +inf).
    }
  });

  std::size_t best = outcomes.size();
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!std::isfinite(outcomes[i].objective)) continue;
    if (best == outcomes.size() || outcomes[i].objective < outcomes[best].objective) best = i;
  }
  if (best == outcomes.size()) throw NumericError("every restart failed");

  FitResult result;
  result.form = form;
  result.phi_mode = phi_mode;
  result.params = objective_fn.unpack(outcomes[best].x);
  result.objective = objective(result.params, objective_fn.observations(), config.huber_delta).value;
  result.n_runs = objective_fn.observations().size();
  result.objective_mean = result.objective / static_cast<double>(result.n_runs);
  result.r2 = r_squared(result.params, objective_fn.observations());
  result.restart_objectives.reserve(outcomes.size());
  for (const RestartOutcome& o : outcomes) result.restart_objectives.push_back(o.objective);
  result.winning_restart = best;
  result.status = outcomes[best].status;
  result.iterations = outcomes[best].iterations;
  result.projected_gradient = outcomes[best].projected_gradient;
  return result;
}

FitResult fit_chinchilla(const std::vector<RunRecord>& runs, const FitConfig& config) {
  return fit_observations(observations(runs), config, LawForm::chinchilla, PhiMode::fixed(0.0));
}

FitResult fit_joint(const std::vector<RunRecord>& runs, const FitConfig& config, PhiMode phi_mode) {
  return fit_observations(observations(runs), config, LawForm::joint, phi_mode);
}

std::string to_string(LawForm form) { return form == LawForm::chinchilla ? "chinchilla" : "joint"; }

}  // namespace loopscale
