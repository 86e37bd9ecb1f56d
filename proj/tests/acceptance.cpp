// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any selected criterion fails.
//
//   acceptance                  all criteria, reduced coverage experiment
//   acceptance --criterion 9    one criterion (repeatable)
//   acceptance --full           coverage experiment at 100 repetitions

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cli.hpp"
#include "loopscale/allocation.hpp"
#include "loopscale/dataset.hpp"
#include "loopscale/fitter.hpp"
#include "loopscale/geometry.hpp"
#include "loopscale/inference.hpp"
#include "loopscale/law.hpp"
#include "oracles.hpp"

using namespace loopscale;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  std::function<Verdict()> run;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

JointParams truth(double phi = oracle::kTruthPhi) {
  return {ChinchillaParams::from_amplitudes(oracle::kTruthA, oracle::kTruthAlpha, oracle::kTruthB,
                                            oracle::kTruthBeta, oracle::kTruthE),
          phi};
}

ModelShape grid_shape(int s, int r) { return r == 1 ? ModelShape::baseline(s) : ModelShape::looped(s, r); }

double round_to(double x, double unit) { return std::round(x / unit) * unit; }

// ---------------------------------------------------------------------------

Verdict grid_params() {
  int ok = 0, total = 0, core_ok = 0;
  std::string misses;
  for (const auto& row : oracle::published_grid()) {
    for (std::size_t k = 0; k < 4; ++k) {
      const ModelShape shape = grid_shape(row.s, oracle::kRValues[k]);
      const double m = unique_params(shape, ParamCounting::with_norms) / 1e6;
      const double core = unique_params(shape) / 1e6;
      ++total;
      if (std::abs(round_to(m, 0.1) - row.params_m[k]) < 1e-6) {
        ++ok;
      } else {
        misses += fmt(" s=%d,r=%d:%.4f", row.s, oracle::kRValues[k], m);
      }
      if (std::abs(round_to(core, 0.1) - row.params_m[k]) < 1e-6) ++core_ok;
    }
  }
  return {ok == total && total == 44,
          fmt("%d/%d cells at 0.1M (12d^2 + norm scales); 12d^2 alone matches %d/%d", ok, total, core_ok, total) +
              misses};
}

Verdict grid_tokens() {
  int ok = 0, total = 0;
  double worst = 0.0;
  std::string misses;
  for (const auto& row : oracle::published_grid()) {
    for (std::size_t b = 0; b < oracle::kBudgets.size(); ++b) {
      if (row.tokens_b[b] <= 0) continue;
      ++total;
      const double d = tokens_for_budget(oracle::kBudgets[b], ModelShape::baseline(row.s), TrainingRecipe::full(),
                                         FlopsConvention::empirical) /
                       1e9;
      const double err = oracle::rel_err(d, row.tokens_b[b]);
      worst = std::max(worst, err);
      if (err <= 0.01) {
        ++ok;
      } else {
        misses += fmt(" (s=%d,C=%.3g: %.3f vs %.2f)", row.s, oracle::kBudgets[b], d, row.tokens_b[b]);
      }
    }
  }
  return {ok == total, fmt("%d/%d r=1 cells within 1%%, worst %.2f%%;", ok, total, worst * 100) + misses};
}

Verdict injection_anchor() {
  const ModelShape linear = ModelShape::looped(10, 4);
  const ModelShape free_inj = ModelShape::looped(10, 4, Injection::additive());
  const double d_lin = tokens_for_budget(1e18, linear, TrainingRecipe::full(), FlopsConvention::empirical);
  const double d_free = tokens_for_budget(1e18, free_inj, TrainingRecipe::full(), FlopsConvention::empirical);
  const double e1 = oracle::rel_err(d_lin, 955e6), e2 = oracle::rel_err(d_free, 973e6);
  return {e1 <= 0.01 && e2 <= 0.01,
          fmt("linear %.2fM (%.3f%%), parameter-free %.2fM (%.3f%%)", d_lin / 1e6, e1 * 100, d_free / 1e6, e2 * 100)};
}

Verdict injection_overhead_exact() {
  int ok = 0, total = 0;
  for (int r : {2, 4, 8}) {
    for (int s : {1, 6, 10, 23, 34}) {
      ++total;
      if (injection_overhead(ModelShape::looped(s, r)) == r / 120.0) ++ok;
    }
  }
  return {ok == total, fmt("%d/%d (r, width) pairs equal r/120 bit for bit", ok, total)};
}

Verdict truncated_bptt() {
  const ModelShape shape = ModelShape::looped(10, 4);
  const double trunc_po = train_flops_per_token(shape, TrainingRecipe::truncated(2), FlopsConvention::parameter_only);
  const double ratio = train_flops_per_token(shape, TrainingRecipe::full(), FlopsConvention::empirical) /
                       train_flops_per_token(shape, TrainingRecipe::truncated(2), FlopsConvention::empirical);
  return {trunc_po == 445'644'800.0 && std::abs(ratio - 1.310) <= 0.01,
          fmt("parameter-only %.0f FLOPs/token, empirical full/trunc token ratio %.4f", trunc_po, ratio)};
}

Verdict equivalences() {
  const EquivalentSizes e = equivalent_sizes(ModelShape::looped(1, 4), 0.46);
  return {e.unique_ratio == 0.4 && std::abs(e.effective_ratio - 0.5785) <= 1e-3,
          fmt("unique %.6f, effective %.6f", e.unique_ratio, e.effective_ratio)};
}

Verdict gradient_check() {
  GridOptions grid;
  grid.budgets = reference_budgets();
  grid.scales = {8, 12, 16, 24};
  grid.r_values = {1, 2, 4, 8};
  const auto runs = synthesize_runs(plan_grid(grid), SyntheticSpec{truth(), 0.003, 31});
  const auto obs = observations(runs);
  std::vector<oracle::Point> pts;
  for (const auto& o : obs) pts.push_back({o.n_once, o.n_rec, o.r, o.tokens, o.loss});

  const Box box = FitBounds{}.box(true);
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::array<double, 6> x{};
    std::array<long double, 6> theta{};
    for (std::size_t k = 0; k < 6; ++k) {
      // Interior: keep h-sized probes inside the box.
      x[k] = box.lower[k] + (box.upper[k] - box.lower[k]) * (0.001 + 0.998 * u(gen));
      theta[k] = x[k];
    }
    const JointParams p{{x[kA], x[kAlpha], x[kB], x[kBeta], x[kE]}, x[kPhi]};
    const ObjectiveValue v = objective(p, obs, 1e-3);
    const auto fd = oracle::fd_gradient(theta, pts, 1e-3L);
    double scale = 0.0;
    for (double g : fd) scale = std::max(scale, std::abs(g));
    for (std::size_t k = 0; k < 6; ++k) worst = std::max(worst, std::abs(v.gradient[k] - fd[k]) / scale);
  }
  return {worst < 1e-6, fmt("%zu runs, 100 points, max error %.2e (relative to the gradient's max norm)",
                            runs.size(), worst)};
}

struct RecoveryCheck {
  bool pass;
  std::string detail;
};

RecoveryCheck recovery_at(const std::vector<RunRecord>& runs, int restarts) {
  FitConfig cfg;
  cfg.restarts = restarts;
  cfg.seed = 20'260'415;
  const FitResult free = fit_joint(runs, cfg, PhiMode::free());
  const FitResult at0 = fit_joint(runs, cfg, PhiMode::fixed(0.0));
  const FitResult at1 = fit_joint(runs, cfg, PhiMode::fixed(1.0));
  const double ea = std::abs(free.params.law.alpha - oracle::kTruthAlpha);
  const double eb = std::abs(free.params.law.beta - oracle::kTruthBeta);
  const double ee = std::abs(free.params.law.irreducible() - oracle::kTruthE);
  const double ep = std::abs(free.params.phi - oracle::kTruthPhi);
  const bool pass = std::max({ea, eb, ee, ep}) < 1e-3 && at0.objective > free.objective &&
                    at1.objective > free.objective;
  return {pass, fmt("[%d restarts: |err| alpha %.1e beta %.1e E %.1e phi %.1e; objective free %.2e < phi=0 %.2e, "
                    "phi=1 %.2e; R2 %.4f/%.4f/%.4f]",
                    restarts, ea, eb, ee, ep, free.objective, at0.objective, at1.objective, free.r2, at0.r2, at1.r2)};
}

Verdict oracle_recovery() {
  const auto runs = synthesize_runs(plan_grid(reference_grid_options()), SyntheticSpec{truth(), 0.0, 0});
  const RecoveryCheck full = recovery_at(runs, 500);
  const RecoveryCheck smoke = recovery_at(runs, 50);
  return {full.pass && smoke.pass, full.detail + " " + smoke.detail};
}

Verdict noisy_coverage(int repetitions) {
  const auto grid = plan_grid(reference_grid_options());
  int covered = 0, close = 0;
  double worst = 0.0;
  for (int k = 0; k < repetitions; ++k) {
    const std::uint64_t seed = 9000 + static_cast<std::uint64_t>(k);
    const auto runs = synthesize_runs(grid, SyntheticSpec{truth(), 0.003, seed});
    FitConfig cfg;
    cfg.seed = seed;
    BootstrapOptions opts;
    opts.seed = seed;
    opts.resamples = 200;
    const BootstrapResult b = block_bootstrap_phi(runs, cfg, opts);
    const double err = std::abs(b.phi_point - oracle::kTruthPhi);
    worst = std::max(worst, err);
    if (err <= 0.03) ++close;
    if (b.ci_low <= oracle::kTruthPhi && oracle::kTruthPhi <= b.ci_high) ++covered;
    std::fprintf(stderr, "  coverage rep %d: phi %.4f CI [%.4f, %.4f]\n", k, b.phi_point, b.ci_low, b.ci_high);
  }
  // >= 90% coverage, i.e. >= 90 of 100 or >= 18 of 20.
  const bool pass = close == repetitions && covered * 10 >= repetitions * 9;
  return {pass, fmt("%d repetitions: point phi within 0.03 in %d (worst %.4f); CI covers truth in %d", repetitions,
                    close, worst, covered)};
}

Verdict delta_discrimination() {
  GridOptions base_grid = reference_grid_options();
  base_grid.budgets = {4.64e17, 1e18, 2.15e18, 4.64e18};
  const auto base = synthesize_runs(plan_grid(base_grid), SyntheticSpec{truth(0.45), 0.0, 0});

  // Probes rerun the looped cells under a new recipe or injection and reuse
  // the baseline r = 1 runs unchanged.
  auto probe = [&](GridOptions grid, double phi) {
    grid.r_values = {2, 4, 8};
    std::vector<RunRecord> runs;
    for (const auto& run : base) {
      if (run.shape.r == 1) runs.push_back(run);
    }
    for (auto& run : synthesize_runs(plan_grid(grid), SyntheticSpec{truth(phi), 0.0, 0})) runs.push_back(run);
    return runs;
  };
  GridOptions trunc = base_grid;
  trunc.bptt = BpttMode::truncated;
  GridOptions hyper = base_grid;
  hyper.injection = Injection::hyper(4);

  FitConfig cfg;
  cfg.seed = 33;
  const DeltaPhiReport down = delta_phi(base, probe(trunc, 0.38), cfg);
  const DeltaPhiReport up = delta_phi(base, probe(hyper, 0.65), cfg);
  const bool pass = down.delta < 0 && up.delta > 0 && std::abs(down.delta - (-0.07)) <= 5e-3 &&
                    std::abs(up.delta - 0.20) <= 5e-3 && down.shares_r1 && up.shares_r1;
  return {pass, fmt("baseline phi %.4f; truncated probe phi %.4f (delta %+.4f); hyperconnection probe phi %.4f "
                    "(delta %+.4f); r=1 runs shared: %s",
                    down.base.params.phi, down.probe.params.phi, down.delta, up.probe.params.phi, up.delta,
                    down.shares_r1 && up.shares_r1 ? "yes" : "no")};
}

Verdict allocation_oracle() {
  AllocationSetup setup;
  setup.layout = ModelShape::baseline(1);
  setup.convention = FlopsConvention::parameter_only;
  std::vector<double> budgets;
  for (int k = 0; k < 10; ++k) budgets.push_back(1e17 * std::pow(10.0, 5.0 * k / 9.0));

  bool pass = true;
  std::string detail;
  for (const auto* q : {&oracle::kFitR1, &oracle::kFitR4}) {
    const JointParams p{ChinchillaParams::from_amplitudes(q->A, q->alpha, q->B, q->beta, q->E), 0.0};
    const Frontier f = frontier(p, setup, budgets);
    double worst = 0.0;
    for (const auto& pt : f.points) {
      worst = std::max(worst, oracle::rel_err(pt.n_star, oracle::closed_form_n_star(q->A, q->alpha, q->B, q->beta,
                                                                                     pt.budget)));
    }
    const double slope_err = std::abs(f.n_star_exponent - q->beta / (q->alpha + q->beta));
    pass = pass && worst < 1e-3 && slope_err < 1e-3;
    detail += fmt("[alpha %.3f beta %.3f: worst N* error %.1e over 10 budgets, slope %.5f (error %.1e)] ", q->alpha,
                  q->beta, worst, f.n_star_exponent, slope_err);
  }
  const double a1 = data_scaling_exponent(oracle::kFitR1.alpha, oracle::kFitR1.beta);
  const double a4 = data_scaling_exponent(oracle::kFitR4.alpha, oracle::kFitR4.beta);
  pass = pass && round_to(a1, 0.01) == round_to(0.52, 0.01) && round_to(a4, 0.001) == round_to(0.670, 0.001);
  detail += fmt("a_D r=1 %.4f, r=4 %.4f", a1, a4);
  return {pass, detail};
}

// ---------------------------------------------------------------------------

struct CliCall {
  int code;
  std::string out;
};

CliCall cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str()};
}

std::string results_payload(const CliCall& call) {
  if (call.code != 0) return "exit " + std::to_string(call.code);
  return nlohmann::ordered_json::parse(call.out)["results"].dump();
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "loopscale_acceptance";
  fs::create_directories(dir);
  const std::string a = (dir / "a.csv").string(), b = (dir / "b.csv").string(), c = (dir / "c.csv").string();

  int same = 0, total = 0;
  std::string diverged;
  auto twice = [&](const std::string& name, std::vector<std::string> args, std::vector<std::string> variant = {}) {
    ++total;
    const std::string first = results_payload(cli(args));
    if (!variant.empty()) args.insert(args.end(), variant.begin(), variant.end());
    const std::string second = results_payload(cli(args));
    if (first == second && first.rfind("exit", 0) != 0) {
      ++same;
    } else {
      diverged += " " + name;
    }
  };

  twice("synth", {"synth", "--reference-cells", "--seed", "41", "--noise", "0.003", "--out", a});
  const std::string bytes = file_bytes(a);
  cli({"synth", "--reference-cells", "--seed", "41", "--noise", "0.003", "--out", b});
  ++total;
  if (bytes == file_bytes(b) && !bytes.empty()) {
    ++same;
  } else {
    diverged += " synth-file";
  }
  cli({"synth", "--reference-cells", "--seed", "42", "--noise", "0.003", "--phi", "0.6", "--out", c});

  twice("fit", {"fit", a, "--seed", "5", "--restarts", "40"}, {"--threads", "3"});
  twice("fit-chinchilla", {"fit", a, "--law", "chinchilla", "--seed", "5", "--restarts", "20"});
  twice("bootstrap",
        {"bootstrap", a, "--seed", "5", "--restarts", "20", "--resamples", "16", "--bootstrap-restarts", "8"},
        {"--threads", "2"});
  twice("stability", {"stability", a, "--seed", "5", "--restarts", "20"});
  twice("compare", {"compare", a, c, "--seed", "5", "--restarts", "20"});
  return {same == total, fmt("%d/%d reruns byte-identical (thread counts varied on fit and bootstrap)", same, total) +
                             (diverged.empty() ? "" : "; diverged:" + diverged)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  bool full = false;
  app.add_option("--criterion", only, "Run only these criteria (repeatable)");
  app.add_flag("--full", full, "Coverage experiment at 100 repetitions instead of 20");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "grid parameter counts", grid_params},
      {2, "grid r=1 token counts", grid_tokens},
      {3, "injection ablation token anchors", injection_anchor},
      {4, "injection overhead r/120", injection_overhead_exact},
      {5, "truncated backprop FLOPs", truncated_bptt},
      {6, "equivalent sizes", equivalences},
      {7, "objective gradient vs finite differences", gradient_check},
      {8, "noiseless oracle recovery", oracle_recovery},
      {9, "noisy recovery and bootstrap coverage", [full] { return noisy_coverage(full ? 100 : 20); }},
      {10, "delta-phi discrimination", delta_discrimination},
      {11, "allocation closed form and frontier slope", allocation_oracle},
      {12, "seeded determinism of stochastic commands", determinism},
  };

  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] criterion %2d  %s: %s (%.2fs)\n", v.pass ? "PASS" : "FAIL", c.id, c.title, v.detail.c_str(),
                secs);
    std::fflush(stdout);
    if (!v.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
