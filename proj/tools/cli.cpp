#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "loopscale/allocation.hpp"
#include "loopscale/dataset.hpp"
#include "loopscale/errors.hpp"
#include "loopscale/fitter.hpp"
#include "loopscale/geometry.hpp"
#include "loopscale/inference.hpp"

namespace loopscale::cli {

namespace {

using Json = nlohmann::ordered_json;

// Default truth for `synth`: the free-phi joint exponents with amplitudes of
// the size seen in per-architecture fits.
constexpr double kTruthA = 23.0;
constexpr double kTruthAlpha = 0.199;
constexpr double kTruthB = 1300.0;
constexpr double kTruthBeta = 0.369;
constexpr double kTruthE = 1.57;
constexpr double kTruthPhi = 0.459;

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt_real(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct LoadedRuns {
  std::vector<RunRecord> runs;
  Json digest;
};

LoadedRuns load_with_digest(const std::string& path) {
  const std::string bytes = read_file(path);
  std::istringstream in(bytes);
  LoadedRuns loaded;
  loaded.runs = load_runs(in, format_for_path(path));
  loaded.digest = {{"path", path}, {"rows", loaded.runs.size()}, {"fnv1a64", hex64(fnv1a64(bytes))}};
  return loaded;
}

// ---- shape arguments -------------------------------------------------------

struct ShapeArgs {
  int s = 10;
  int r = 1;
  int l_eff = 20;
  int n_prelude = 2;
  int n_coda = 2;
  std::string injection = "auto";
  int seq_len = 2048;
  int vocab = 32064;
  std::string bptt = "full";
  int r_bwd = 0;

  void add_layout(CLI::App* app, bool with_scale) {
    if (with_scale) app->add_option("--s", s, "Width scale, d_model = 64 s")->capture_default_str();
    app->add_option("--r", r, "Recurrence count")->capture_default_str();
    app->add_option("--l-eff", l_eff, "Effective depth (executed layers)")->capture_default_str();
    app->add_option("--n-prelude", n_prelude, "Prelude layers")->capture_default_str();
    app->add_option("--n-coda", n_coda, "Coda layers")->capture_default_str();
    app->add_option("--injection", injection,
                    "none | linear | additive | hyper:<K>; auto = none for r=1, linear otherwise")
        ->capture_default_str();
    app->add_option("--seq-len", seq_len, "Context length T")->capture_default_str();
    app->add_option("--vocab", vocab, "Vocabulary size V")->capture_default_str();
  }

  void add_recipe(CLI::App* app) {
    app->add_option("--bptt", bptt, "full | trunc")->capture_default_str();
    app->add_option("--r-bwd", r_bwd, "Gradient window for trunc (default ceil(r/2))");
  }

  Injection resolve_injection(int for_r) const {
    if (injection == "auto") return for_r == 1 ? Injection::none() : Injection::linear();
    return Injection::parse(injection);
  }

  ModelShape shape() const {
    ModelShape out;
    out.s = s;
    out.r = r;
    out.l_eff = l_eff;
    out.n_prelude = n_prelude;
    out.n_coda = n_coda;
    out.injection = resolve_injection(r);
    out.seq_len = seq_len;
    out.vocab = vocab;
    out.validate();
    return out;
  }

  TrainingRecipe recipe(int for_r) const {
    if (bptt == "full") return TrainingRecipe::full();
    if (bptt == "trunc") {
      return r_bwd > 0 ? TrainingRecipe::truncated(r_bwd) : TrainingRecipe::truncated_default(for_r);
    }
    throw UsageError("--bptt must be full or trunc, got '" + bptt + "'");
  }

  Json layout_json(bool with_scale) const {
    Json j;
    if (with_scale) j["s"] = s;
    j["r"] = r;
    j["l_eff"] = l_eff;
    j["n_prelude"] = n_prelude;
    j["n_coda"] = n_coda;
    j["injection"] = resolve_injection(r).to_string();
    j["seq_len"] = seq_len;
    j["vocab"] = vocab;
    return j;
  }
};

Json recipe_json(const TrainingRecipe& recipe) {
  Json j = {{"bptt", to_string(recipe.bptt)}};
  if (recipe.bptt == BpttMode::truncated) j["r_bwd"] = recipe.r_bwd;
  return j;
}

// ---- fit arguments ---------------------------------------------------------

struct FitArgs {
  int restarts = 500;
  std::uint64_t seed = 0;
  double delta = 1e-3;
  int max_iter = 10000;
  unsigned threads = 0;

  void add(CLI::App* app, bool seed_required = true) {
    app->add_option("--restarts", restarts, "Random restarts per fit")->capture_default_str();
    auto* opt = app->add_option("--seed", seed, "64-bit seed for restart starting points");
    if (seed_required) opt->required();
    app->add_option("--delta", delta, "Huber threshold on log-loss residuals")->capture_default_str();
    app->add_option("--max-iter", max_iter, "Iteration cap per restart")->capture_default_str();
    app->add_option("--threads", threads, "Worker threads, 0 = all cores (results do not depend on it)")
        ->capture_default_str();
  }

  FitConfig config() const {
    FitConfig c;
    c.restarts = restarts;
    c.seed = seed;
    c.huber_delta = delta;
    c.max_iter = max_iter;
    c.threads = threads;
    c.validate();
    return c;
  }
};

// Settings that shape the results; threads is excluded because it cannot
// change them.
Json fit_config_json(const FitConfig& c) {
  return {{"restarts", c.restarts},
          {"seed", c.seed},
          {"huber_delta", c.huber_delta},
          {"max_iter", c.max_iter},
          {"grad_tol", c.grad_tol},
          {"step_tol", c.step_tol},
          {"f_tol", c.f_tol},
          {"memory", c.memory},
          {"bounds",
           {{"a", {c.bounds.a.lo, c.bounds.a.hi}},
            {"alpha", {c.bounds.alpha.lo, c.bounds.alpha.hi}},
            {"b", {c.bounds.b.lo, c.bounds.b.hi}},
            {"beta", {c.bounds.beta.lo, c.bounds.beta.hi}},
            {"e", {c.bounds.e.lo, c.bounds.e.hi}},
            {"phi", {c.bounds.phi.lo, c.bounds.phi.hi}}}}};
}

Json params_json(const JointParams& p) {
  return {{"a", p.law.a},
          {"alpha", p.law.alpha},
          {"b", p.law.b},
          {"beta", p.law.beta},
          {"e", p.law.e},
          {"phi", p.phi},
          {"A", p.law.amplitude_a()},
          {"B", p.law.amplitude_b()},
          {"E", p.law.irreducible()}};
}

JointParams params_from_json(const Json& j) {
  auto get = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_number()) {
      throw UsageError(std::string("parameter object lacks numeric '") + key + "'");
    }
    return j[key].get<double>();
  };
  JointParams p;
  p.law = {get("a"), get("alpha"), get("b"), get("beta"), get("e")};
  p.phi = j.contains("phi") ? get("phi") : 0.0;
  return p;
}

Json fit_json(const FitResult& fit) {
  std::vector<double> finite;
  for (double o : fit.restart_objectives) {
    if (std::isfinite(o)) finite.push_back(o);
  }
  std::sort(finite.begin(), finite.end());
  const double best = fit.objective;
  const auto near = std::count_if(finite.begin(), finite.end(), [&](double o) {
    return o <= best + 1e-6 * std::max(std::abs(best), 1e-300) + 1e-18;
  });
  Json summary = {{"restarts", fit.restart_objectives.size()},
                  {"failed", fit.restart_objectives.size() - finite.size()},
                  {"within_1e-6_of_best", near},
                  {"winning_restart", fit.winning_restart},
                  {"winner_status", to_string(fit.status)},
                  {"winner_iterations", fit.iterations},
                  {"winner_projected_gradient", fit.projected_gradient}};
  if (!finite.empty()) {
    summary["objective_min"] = finite.front();
    summary["objective_median"] = finite[finite.size() / 2];
    summary["objective_max"] = finite.back();
  }
  Json phi_mode = fit.phi_mode.is_free ? Json("free") : Json(fit.phi_mode.value);
  return {{"law", to_string(fit.form)},
          {"phi_mode", phi_mode},
          {"params", params_json(fit.params)},
          {"objective", fit.objective},
          {"objective_mean", fit.objective_mean},
          {"r2", fit.r2},
          {"n_runs", fit.n_runs},
          {"data_scaling_exponent", data_scaling_exponent(fit.params.law.alpha, fit.params.law.beta)},
          {"restart_summary", summary}};
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

PhiMode parse_phi_mode(const std::string& text) {
  if (text == "free") return PhiMode::free();
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return PhiMode::fixed(v);
  } catch (const std::exception&) {
  }
  throw UsageError("--phi must be free or a number, got '" + text + "'");
}

class TableWriter {
 public:
  explicit TableWriter(const std::string& path) : path_(path) {
    if (!path_.empty()) {
      out_.open(path_, std::ios::binary);
      if (!out_) throw UsageError("cannot write table '" + path_ + "'");
    }
  }
  bool active() const { return !path_.empty(); }
  void row(const std::vector<std::string>& cells) {
    if (!active()) return;
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

 private:
  std::string path_;
  std::ofstream out_;
};

Json make_report(const std::string& command, Json input, Json config, Json results) {
  return {{"command", command},
          {"version", kVersion},
          {"input", std::move(input)},
          {"config", std::move(config)},
          {"results", std::move(results)}};
}

// ---- commands --------------------------------------------------------------

Json cmd_flops(const ShapeArgs& args, std::optional<double> budget) {
  const ModelShape shape = args.shape();
  const TrainingRecipe recipe = args.recipe(shape.r);
  recipe.validate_for(shape);
  const ParamSplit split = param_split(shape);
  Json results = {{"d_model", shape.d_model()},
                  {"n_recur", shape.n_recur()},
                  {"unique_params", split.total()},
                  {"unique_params_with_norms", unique_params(shape, ParamCounting::with_norms)},
                  {"n_once", split.once},
                  {"n_rec", split.recurrent},
                  {"injection_overhead", injection_overhead(shape)}};
  for (FlopsConvention conv : {FlopsConvention::parameter_only, FlopsConvention::empirical}) {
    Json c = {{"forward_flops_per_token", forward_flops_per_token(shape, conv)},
              {"train_flops_per_token", train_flops_per_token(shape, recipe, conv)}};
    if (recipe.bptt == BpttMode::truncated) {
      // Tokens bought per FLOP relative to full backprop.
      c["trunc_over_full_tokens"] = train_flops_per_token(shape, TrainingRecipe::full(), conv) /
                                    train_flops_per_token(shape, recipe, conv);
    }
    if (budget) c["tokens_for_budget"] = tokens_for_budget(*budget, shape, recipe, conv);
    results[to_string(conv)] = c;
  }
  Json config = {{"shape", args.layout_json(true)}, {"recipe", recipe_json(recipe)}};
  if (budget) config["budget_flops"] = *budget;
  return make_report("flops", nullptr, config, results);
}

struct GridArgs {
  std::vector<double> budgets;
  std::vector<int> scales;
  std::vector<int> r_values{1, 2, 4, 8};
  bool reference_cells = false;
  std::string injection = "linear";
  std::string bptt = "full";
  int r_bwd = 0;
  std::string convention = "empirical";
  std::optional<double> min_tokens;
  std::optional<double> max_tokens;

  void add(CLI::App* app) {
    app->add_option("--budgets", budgets, "Compute budgets in FLOPs (default: reference six)")
        ->delimiter(',');
    app->add_option("--scales", scales, "Width scales s (default: reference eleven)")->delimiter(',');
    app->add_option("--r-values", r_values, "Recurrence counts")->delimiter(',')->capture_default_str();
    app->add_flag("--reference-cells", reference_cells,
                  "Keep only the (s, budget) cells of the reference sparse sweep");
    app->add_option("--injection", injection, "Injection for r > 1 cells")->capture_default_str();
    app->add_option("--bptt", bptt, "full | trunc (trunc applies to r > 1)")->capture_default_str();
    app->add_option("--r-bwd", r_bwd, "Gradient window for trunc (default ceil(r/2))");
    app->add_option("--convention", convention, "empirical | parameter_only")->capture_default_str();
    app->add_option("--min-tokens", min_tokens, "Drop cells with fewer tokens");
    app->add_option("--max-tokens", max_tokens, "Drop cells with more tokens");
  }

  GridOptions options() const {
    GridOptions o;
    o.budgets = budgets.empty() ? reference_budgets() : budgets;
    o.scales = scales.empty() ? reference_scales() : scales;
    o.r_values = r_values;
    o.injection = Injection::parse(injection);
    if (bptt == "trunc") {
      o.bptt = BpttMode::truncated;
    } else if (bptt != "full") {
      throw UsageError("--bptt must be full or trunc");
    }
    o.r_bwd = r_bwd;
    o.convention = parse_convention(convention);
    o.min_tokens = min_tokens;
    o.max_tokens = max_tokens;
    if (reference_cells) o.keep = reference_cell_trained;
    return o;
  }

  Json json(const GridOptions& o) const {
    Json j = {{"budgets", o.budgets},
              {"scales", o.scales},
              {"r_values", o.r_values},
              {"reference_cells", reference_cells},
              {"injection", o.injection.to_string()},
              {"bptt", to_string(o.bptt)},
              {"convention", to_string(o.convention)}};
    if (o.bptt == BpttMode::truncated) j["r_bwd"] = r_bwd > 0 ? Json(r_bwd) : Json("ceil(r/2)");
    j["min_tokens"] = min_tokens ? Json(*min_tokens) : Json(nullptr);
    j["max_tokens"] = max_tokens ? Json(*max_tokens) : Json(nullptr);
    return j;
  }
};

Json cmd_grid(const GridArgs& args, const std::string& table_out) {
  const GridOptions options = args.options();
  const std::vector<GridCell> cells = plan_grid(options);
  TableWriter table(table_out);
  table.row({"budget_flops", "s", "r", "d_model", "n_params", "tokens"});
  Json list = Json::array();
  for (const GridCell& c : cells) {
    list.push_back({{"budget_flops", c.budget},
                    {"s", c.shape.s},
                    {"r", c.shape.r},
                    {"n_params", c.n_params},
                    {"tokens", c.tokens}});
    table.row({fmt_real(c.budget), std::to_string(c.shape.s), std::to_string(c.shape.r),
               fmt_real(c.shape.d_model()), fmt_real(c.n_params), fmt_real(c.tokens)});
  }
  return make_report("grid", nullptr, args.json(options), {{"n_cells", cells.size()}, {"cells", list}});
}

struct TruthArgs {
  double A = kTruthA;
  double alpha = kTruthAlpha;
  double B = kTruthB;
  double beta = kTruthBeta;
  double E = kTruthE;
  double phi = kTruthPhi;

  void add(CLI::App* app) {
    app->add_option("--A", A, "Parameter-term amplitude")->capture_default_str();
    app->add_option("--alpha", alpha, "Parameter exponent")->capture_default_str();
    app->add_option("--B", B, "Data-term amplitude")->capture_default_str();
    app->add_option("--beta", beta, "Data exponent")->capture_default_str();
    app->add_option("--E", E, "Irreducible loss")->capture_default_str();
    app->add_option("--phi", phi, "Recurrence-equivalence exponent")->capture_default_str();
  }

  JointParams params() const { return {ChinchillaParams::from_amplitudes(A, alpha, B, beta, E), phi}; }
};

Json cmd_synth(const GridArgs& grid_args, const TruthArgs& truth, double noise, std::uint64_t seed,
               const std::string& variant, const std::string& out_path) {
  const GridOptions options = grid_args.options();
  SyntheticSpec spec;
  spec.truth = truth.params();
  spec.noise_sigma = noise;
  spec.seed = seed;
  spec.variant = variant;
  const std::vector<RunRecord> runs = synthesize_runs(plan_grid(options), spec);
  std::ostringstream text;
  write_runs(text, runs);
  {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw UsageError("cannot write '" + out_path + "'");
    out << text.str();
  }
  Json config = {{"grid", grid_args.json(options)},
                 {"truth", params_json(spec.truth)},
                 {"noise_sigma", noise},
                 {"seed", seed},
                 {"variant", variant},
                 {"out", out_path}};
  Json results = {{"n_runs", runs.size()}, {"fnv1a64", hex64(fnv1a64(text.str()))}};
  return make_report("synth", nullptr, config, results);
}

Json cmd_fit(const std::string& path, const std::string& law, const std::string& phi_text,
             const FitArgs& fit_args, const std::string& table_out) {
  const LoadedRuns loaded = load_with_digest(path);
  const FitConfig config = fit_args.config();
  Json results;
  Json cfg = {{"law", law}, {"fit", fit_config_json(config)}};
  if (law == "joint") {
    const PhiMode mode = parse_phi_mode(phi_text);
    cfg["phi"] = phi_text;
    results = fit_json(fit_joint(loaded.runs, config, mode));
  } else if (law == "chinchilla") {
    // One fit per architecture.
    std::map<int, std::vector<RunRecord>> by_r;
    for (const RunRecord& run : loaded.runs) by_r[run.shape.r].push_back(run);
    Json fits = Json::array();
    for (const auto& [r, runs] : by_r) {
      Json f = fit_json(fit_chinchilla(runs, config));
      f["r"] = r;
      fits.push_back(std::move(f));
    }
    results = {{"fits", fits}};
  } else {
    throw UsageError("--law must be chinchilla or joint, got '" + law + "'");
  }

  TableWriter table(table_out);
  if (table.active()) {
    table.row({"budget_flops", "r", "n_runs", "n_star", "l_star", "extrapolated"});
    for (const Cell& cell : group_cells(loaded.runs)) {
      std::vector<RunRecord> members;
      for (std::size_t i : cell.members) members.push_back(loaded.runs[i]);
      std::set<double> distinct;
      for (const RunRecord& m : members) distinct.insert(unique_params(m.shape));
      if (distinct.size() < 3) continue;
      const ParabolaFit p = isoflops_parabola(members);
      table.row({fmt_real(cell.budget), std::to_string(cell.r), std::to_string(members.size()),
                 fmt_real(p.n_star), fmt_real(p.l_star), p.extrapolated ? "1" : "0"});
    }
  }
  return make_report("fit", loaded.digest, cfg, results);
}

Json cmd_bootstrap(const std::string& path, const FitArgs& fit_args, int resamples,
                   int bootstrap_restarts, const std::string& table_out) {
  const LoadedRuns loaded = load_with_digest(path);
  const FitConfig config = fit_args.config();
  BootstrapOptions options;
  options.resamples = resamples;
  options.seed = fit_args.seed;
  options.resample_restarts = bootstrap_restarts;
  const BootstrapResult b = block_bootstrap_phi(loaded.runs, config, options);
  TableWriter table(table_out);
  table.row({"resample", "phi"});
  for (std::size_t i = 0; i < b.phi_samples.size(); ++i) {
    table.row({std::to_string(i), fmt_real(b.phi_samples[i])});
  }
  const auto at_or_beyond = [&](double v, bool upper) {
    return std::count_if(b.phi_samples.begin(), b.phi_samples.end(),
                         [&](double x) { return upper ? x >= v : x <= v; });
  };
  Json cfg = {{"fit", fit_config_json(config)},
              {"resamples", resamples},
              {"bootstrap_restarts", bootstrap_restarts},
              {"max_redraws", options.max_redraws},
              {"percentiles", {0.025, 0.975}}};
  Json results = {{"phi_point", b.phi_point},
                  {"ci_low", b.ci_low},
                  {"ci_high", b.ci_high},
                  {"n_resamples", b.n_resamples},
                  {"n_cells", b.n_cells},
                  {"redraws", b.redraws},
                  {"samples_at_or_below_0", at_or_beyond(0.0, false)},
                  {"samples_at_or_above_1", at_or_beyond(1.0, true)},
                  {"point_fit", fit_json(b.point_fit)},
                  {"phi_samples", b.phi_samples}};
  return make_report("bootstrap", loaded.digest, cfg, results);
}

Json cmd_stability(const std::string& path, const FitArgs& fit_args, double threshold) {
  const LoadedRuns loaded = load_with_digest(path);
  const FitConfig config = fit_args.config();
  const SplitStability s = split_stability(loaded.runs, threshold, config);
  Json cfg = {{"fit", fit_config_json(config)}, {"budget_threshold", threshold}};
  Json results = {{"phi_low", s.phi_low()},
                  {"phi_high", s.phi_high()},
                  {"low", fit_json(s.low)},
                  {"high", fit_json(s.high)}};
  return make_report("stability", loaded.digest, cfg, results);
}

Json cmd_compare(const std::string& base_path, const std::string& probe_path, const FitArgs& fit_args) {
  const LoadedRuns base = load_with_digest(base_path);
  const LoadedRuns probe = load_with_digest(probe_path);
  const FitConfig config = fit_args.config();
  const DeltaPhiReport r = delta_phi(base.runs, probe.runs, config);
  Json results = {{"phi_base", r.base.params.phi},
                  {"phi_probe", r.probe.params.phi},
                  {"delta_phi", r.delta},
                  {"base_r1_runs", r.base_r1_runs},
                  {"probe_r1_runs", r.probe_r1_runs},
                  {"shared_r1_runs", r.shared_r1_runs},
                  {"shares_r1", r.shares_r1},
                  {"base", fit_json(r.base)},
                  {"probe", fit_json(r.probe)}};
  return make_report("compare", {{"base", base.digest}, {"probe", probe.digest}},
                     {{"fit", fit_config_json(config)}}, results);
}

JointParams params_from_report(const std::string& path) {
  Json doc;
  try {
    doc = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ValidationError("cannot parse report '" + path + "': " + e.what());
  }
  const Json& results = doc.contains("results") ? doc["results"] : doc;
  if (results.contains("params")) return params_from_json(results["params"]);
  if (results.contains("point_fit")) return params_from_json(results["point_fit"]["params"]);
  if (results.contains("fits") && results["fits"].is_array() && !results["fits"].empty()) {
    return params_from_json(results["fits"][0]["params"]);
  }
  throw ValidationError("report '" + path + "' carries no fitted parameters");
}

Json cmd_allocate(const ShapeArgs& args, const std::string& convention, const std::string& params_text,
                  const std::string& from, const std::vector<double>& budgets,
                  const std::string& table_out) {
  JointParams params;
  std::string source;
  if (!from.empty() && !params_text.empty()) throw UsageError("give --params or --from, not both");
  if (!from.empty()) {
    params = params_from_report(from);
    source = from;
  } else if (!params_text.empty()) {
    const std::vector<std::string> parts = split_list(params_text);
    if (parts.size() != 5 && parts.size() != 6) {
      throw UsageError("--params takes a,alpha,b,beta,e[,phi] (log amplitudes)");
    }
    std::vector<double> v;
    for (const std::string& p : parts) {
      try {
        v.push_back(std::stod(p));
      } catch (const std::exception&) {
        throw UsageError("--params entry '" + p + "' is not a number");
      }
    }
    params.law = {v[0], v[1], v[2], v[3], v[4]};
    params.phi = v.size() == 6 ? v[5] : 0.0;
    source = "inline";
  } else {
    throw UsageError("allocate needs --params or --from");
  }
  if (budgets.empty()) throw UsageError("allocate needs --budgets");

  AllocationSetup setup;
  setup.layout = args.shape();
  setup.recipe = args.recipe(setup.layout.r);
  setup.convention = parse_convention(convention);

  Json points = Json::array();
  TableWriter table(table_out);
  table.row({"budget_flops", "r", "n_star", "n_once", "n_rec", "d_star", "width_star", "loss_star"});
  std::optional<Frontier> front;
  std::vector<AllocationPoint> list;
  if (budgets.size() >= 2) {
    front = frontier(params, setup, budgets);
    list = front->points;
  } else {
    list.push_back(optimal_allocation(params, setup, budgets.front()));
  }
  for (const AllocationPoint& p : list) {
    points.push_back({{"budget_flops", p.budget},
                      {"n_star", p.n_star},
                      {"n_once", p.split.once},
                      {"n_rec", p.split.recurrent},
                      {"d_star", p.d_star},
                      {"width_star", p.width_star},
                      {"loss_star", p.loss_star}});
    table.row({fmt_real(p.budget), std::to_string(setup.layout.r), fmt_real(p.n_star),
               fmt_real(p.split.once), fmt_real(p.split.recurrent), fmt_real(p.d_star),
               fmt_real(p.width_star), fmt_real(p.loss_star)});
  }
  Json results = {{"points", points},
                  {"data_scaling_exponent", data_scaling_exponent(params.law.alpha, params.law.beta)}};
  if (front) results["n_star_exponent"] = front->n_star_exponent;
  Json cfg = {{"params", params_json(params)},
              {"params_source", source},
              {"layout", args.layout_json(false)},
              {"recipe", recipe_json(setup.recipe)},
              {"convention", to_string(setup.convention)},
              {"budgets", budgets}};
  return make_report("allocate", nullptr, cfg, results);
}

Json cmd_equiv(const ShapeArgs& args, double phi, std::optional<double> amplitude, double alpha) {
  const ModelShape shape = args.shape();
  const EquivalentSizes eq = equivalent_sizes(shape, phi);
  const double gain = recurrence_gain(shape, phi);
  Json results = {{"unique_ratio", eq.unique_ratio},
                  {"effective_ratio", eq.effective_ratio},
                  {"r_pow_phi", std::pow(static_cast<double>(shape.r), phi)},
                  {"recurrence_gain", gain}};
  Json cfg = {{"shape", args.layout_json(true)}, {"phi", phi}};
  if (amplitude) {
    results["effective_amplitude"] = effective_amplitude(*amplitude, alpha, gain);
    cfg["A"] = *amplitude;
    cfg["alpha"] = alpha;
  }
  return make_report("equiv", nullptr, cfg, results);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scaling-law toolkit for looped (prelude-recur-coda) language models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string table_out;
  const char* table_help = "Write a delimited plot table to this path";

  // flops
  ShapeArgs flops_shape;
  std::optional<double> flops_budget;
  auto* flops = app.add_subcommand("flops", "Parameter and per-token FLOPs accounting for one shape");
  flops_shape.add_layout(flops, true);
  flops_shape.add_recipe(flops);
  flops->add_option("--budget", flops_budget, "Also report tokens trained at this FLOPs budget");

  // grid
  GridArgs grid_args;
  auto* grid = app.add_subcommand("grid", "Plan an iso-compute grid");
  grid_args.add(grid);
  grid->add_option("--table-out", table_out,
                   std::string(table_help) + "; columns budget_flops,s,r,d_model,n_params,tokens");

  // synth
  GridArgs synth_grid;
  TruthArgs truth;
  double noise = 0.0;
  std::uint64_t synth_seed = 0;
  std::string variant = "synthetic";
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate runs from a known joint law over a grid");
  synth_grid.add(synth);
  truth.add(synth);
  synth->add_option("--noise", noise, "Log-normal noise sigma on loss")->capture_default_str();
  synth->add_option("--seed", synth_seed, "64-bit noise seed")->required();
  synth->add_option("--variant", variant, "Variant tag written to every run")->capture_default_str();
  synth->add_option("--out", synth_out, "Run file to write (delimited)")->required();

  // fit
  std::string fit_path, law = "joint", phi_text = "free";
  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit the Chinchilla (per architecture) or joint law");
  fit->add_option("runs", fit_path, "Run file (.csv delimited or .json structured)")->required();
  fit->add_option("--law", law, "chinchilla | joint")->capture_default_str();
  fit->add_option("--phi", phi_text, "free, or a fixed value such as 0 or 1")->capture_default_str();
  fit_args.add(fit);
  fit->add_option("--table-out", table_out,
                  std::string(table_help) +
                      "; per (budget, r) iso-FLOPs parabola: budget_flops,r,n_runs,n_star,l_star,extrapolated");

  // bootstrap
  std::string boot_path;
  FitArgs boot_args;
  int resamples = 200;
  int bootstrap_restarts = 50;
  auto* boot = app.add_subcommand("bootstrap", "Block-bootstrap confidence interval for phi");
  boot->add_option("runs", boot_path, "Run file")->required();
  boot_args.add(boot);
  boot->add_option("--resamples", resamples, "Bootstrap resamples")->capture_default_str();
  boot->add_option("--bootstrap-restarts", bootstrap_restarts, "Restarts per resample refit")
      ->capture_default_str();
  boot->add_option("--table-out", table_out, std::string(table_help) + "; columns resample,phi");

  // stability
  std::string stab_path;
  FitArgs stab_args;
  double threshold = 2.15e18;
  auto* stab = app.add_subcommand("stability", "Refit phi on the low and high budget halves");
  stab->add_option("runs", stab_path, "Run file")->required();
  stab_args.add(stab);
  stab->add_option("--threshold", threshold, "Low half is C <= threshold")->capture_default_str();

  // compare
  std::string base_path, probe_path;
  FitArgs cmp_args;
  auto* cmp = app.add_subcommand("compare", "Delta-phi between a baseline and a probe run set");
  cmp->add_option("base", base_path, "Baseline run file")->required();
  cmp->add_option("probe", probe_path, "Probe run file")->required();
  cmp_args.add(cmp);

  // allocate
  ShapeArgs alloc_shape;
  std::string alloc_conv = "empirical", params_text, from;
  std::vector<double> budgets;
  auto* alloc = app.add_subcommand("allocate", "Compute-optimal N*, D*, L* per budget");
  alloc_shape.add_layout(alloc, false);
  alloc_shape.add_recipe(alloc);
  alloc->add_option("--convention", alloc_conv, "empirical | parameter_only")->capture_default_str();
  alloc->add_option("--params", params_text, "a,alpha,b,beta,e[,phi] with log amplitudes");
  alloc->add_option("--from", from, "Take parameters from a prior fit/bootstrap report");
  alloc->add_option("--budgets", budgets, "Compute budgets in FLOPs")->delimiter(',')->required();
  alloc->add_option("--table-out", table_out,
                    std::string(table_help) +
                        "; columns budget_flops,r,n_star,n_once,n_rec,d_star,width_star,loss_star");

  // equiv
  ShapeArgs eq_shape;
  eq_shape.r = 4;
  double eq_phi = 0.46;
  std::optional<double> eq_amplitude;
  double eq_alpha = 0.0;
  auto* equiv = app.add_subcommand("equiv", "Unique and effective size ratios against r = 1");
  eq_shape.add_layout(equiv, true);
  equiv->add_option("--phi", eq_phi, "Recurrence-equivalence exponent")->capture_default_str();
  equiv->add_option("--A", eq_amplitude, "Amplitude to convert into an effective amplitude");
  equiv->add_option("--alpha", eq_alpha, "Parameter exponent for --A")->capture_default_str();

  std::vector<std::string> argv_store{"loopscale"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (std::string& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    Json report;
    if (*flops) report = cmd_flops(flops_shape, flops_budget);
    if (*grid) report = cmd_grid(grid_args, table_out);
    if (*synth) report = cmd_synth(synth_grid, truth, noise, synth_seed, variant, synth_out);
    if (*fit) report = cmd_fit(fit_path, law, phi_text, fit_args, table_out);
    if (*boot) report = cmd_bootstrap(boot_path, boot_args, resamples, bootstrap_restarts, table_out);
    if (*stab) report = cmd_stability(stab_path, stab_args, threshold);
    if (*cmp) report = cmd_compare(base_path, probe_path, cmp_args);
    if (*alloc) report = cmd_allocate(alloc_shape, alloc_conv, params_text, from, budgets, table_out);
    if (*equiv) report = cmd_equiv(eq_shape, eq_phi, eq_amplitude, eq_alpha);
    out << report.dump(2) << '\n';
    return kOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ValidationError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kNumeric;
  }
}

}  // namespace loopscale::cli
