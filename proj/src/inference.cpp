#include "loopscale/inference.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "loopscale/errors.hpp"
#include "loopscale/parallel.hpp"
#include "loopscale/rng.hpp"

namespace loopscale {

namespace {

struct ResampleOutcome {
  double phi = 0.0;
  int redraws = 0;
};

bool same_run(const RunRecord& x, const RunRecord& y) {
  return x.shape == y.shape && x.recipe == y.recipe && budget_key(x.budget) == budget_key(y.budget) &&
         x.tokens == y.tokens && x.val_loss == y.val_loss;
}

std::vector<const RunRecord*> r1_runs(const std::vector<RunRecord>& runs) {
  std::vector<const RunRecord*> out;
  for (const RunRecord& run : runs) {
    if (run.shape.r == 1) out.push_back(&run);
  }
  return out;
}

}  // namespace

double percentile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw UsageError("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw UsageError("percentile level must lie in [0, 1]");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BootstrapResult block_bootstrap_phi(const std::vector<RunRecord>& runs, const FitConfig& fit_config,
                                    const BootstrapOptions& options) {
  if (options.resamples < 1) throw UsageError("bootstrap needs at least one resample");
  if (options.resample_restarts < 1) throw UsageError("resample restarts must be >= 1");
  if (options.max_redraws < 0) throw UsageError("max redraws must be >= 0");
  const std::vector<Cell> cells = group_cells(runs);
  if (cells.size() < 2) throw UsageError("block bootstrap needs at least two (budget, r) cells");

  BootstrapResult result;
  result.point_fit = fit_joint(runs, fit_config, PhiMode::free());
  result.phi_point = result.point_fit.params.phi;
  result.n_resamples = options.resamples;
  result.seed = options.seed;
  result.n_cells = cells.size();

  const std::vector<Observation> all_obs = observations(runs);
  FitConfig resample_config = fit_config;
  resample_config.restarts = options.resample_restarts;
  resample_config.threads = 1;

  std::vector<ResampleOutcome> outcomes(static_cast<std::size_t>(options.resamples));
  parallel_for(outcomes.size(), fit_config.threads, [&](std::size_t i) {
    Rng rng(derive_seed(options.seed, kResampleStream + i));
    std::vector<Observation> sample;
    int redraws = 0;
    while (true) {
      sample.clear();
      for (std::size_t k = 0; k < cells.size(); ++k) {
        const Cell& cell = cells[rng.below(cells.size())];
        for (std::size_t m : cell.members) sample.push_back(all_obs[m]);
      }
      try {
        check_identifiable(sample, LawForm::joint, PhiMode::free());
        break;
      } catch (const UsageError&) {
        if (++redraws > options.max_redraws) {
          throw NumericError("bootstrap resample " + std::to_string(i) +
                             " stayed unidentifiable after " + std::to_string(options.max_redraws) +
                             " redraws");
        }
      }
    }
    FitConfig config = resample_config;
    config.seed = derive_seed(options.seed, i);
    const FitResult fit = fit_observations(std::move(sample), config, LawForm::joint, PhiMode::free());
    outcomes[i] = {fit.params.phi, redraws};
  });

  result.phi_samples.reserve(outcomes.size());
  for (const ResampleOutcome& o : outcomes) {
    result.phi_samples.push_back(o.phi);
    result.redraws += o.redraws;
  }
  std::vector<double> sorted = result.phi_samples;
  std::sort(sorted.begin(), sorted.end());
  result.ci_low = percentile_sorted(sorted, 0.025);
  result.ci_high = percentile_sorted(sorted, 0.975);
  return result;
}

SplitStability split_stability(const std::vector<RunRecord>& runs, double budget_threshold,
                               const FitConfig& config) {
  if (!(budget_threshold > 0.0)) throw UsageError("budget threshold must be positive");
  const double key = budget_key(budget_threshold);
  std::vector<RunRecord> low, high;
  for (const RunRecord& run : runs) {
    (budget_key(run.budget) <= key ? low : high).push_back(run);
  }
  if (low.empty() || high.empty()) {
    throw UsageError("budget threshold leaves one half empty (" + std::to_string(low.size()) +
                     " low, " + std::to_string(high.size()) + " high)");
  }
  SplitStability out;
  out.threshold = budget_threshold;
  out.low = fit_joint(low, config, PhiMode::free());
  out.high = fit_joint(high, config, PhiMode::free());
  return out;
}

DeltaPhiReport delta_phi(const std::vector<RunRecord>& baseline, const std::vector<RunRecord>& probe,
                         const FitConfig& config) {
  DeltaPhiReport report;
  report.base = fit_joint(baseline, config, PhiMode::free());
  report.probe = fit_joint(probe, config, PhiMode::free());
  report.delta = report.probe.params.phi - report.base.params.phi;

  const auto base_r1 = r1_runs(baseline);
  const auto probe_r1 = r1_runs(probe);
  report.base_r1_runs = base_r1.size();
  report.probe_r1_runs = probe_r1.size();
  for (const RunRecord* p : probe_r1) {
    const bool found = std::any_of(base_r1.begin(), base_r1.end(),
                                   [&](const RunRecord* b) { return same_run(*p, *b); });
    if (found) ++report.shared_r1_runs;
  }
  report.shares_r1 = !base_r1.empty() && base_r1.size() == probe_r1.size() &&
                     report.shared_r1_runs == probe_r1.size();
  return report;
}

}  // namespace loopscale
