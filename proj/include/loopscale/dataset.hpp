#pragma once

// Run records: loading, grid planning, synthetic generation and cell grouping.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "loopscale/geometry.hpp"
#include "loopscale/law.hpp"

namespace loopscale {

struct RunRecord {
  ModelShape shape;
  TrainingRecipe recipe;
  double budget = 0.0;    // C, FLOPs
  double tokens = 0.0;    // D
  double val_loss = 0.0;  // L, nats
  std::string variant;

  /// Throws ValidationError if L, D, C are not positive and finite or the
  /// shape/recipe are invalid.
  void validate() const;

  /// |D * F_train - C| / C under `conv`.
  double budget_mismatch(FlopsConvention conv) const;

  /// The run as the fitting objective sees it, with core parameter counting.
  Observation observation() const;
};

enum class RunFormat { delimited, structured };

struct LoadOptions {
  /// When set, every record must satisfy |D F_train - C| / C <= tolerance.
  std::optional<FlopsConvention> budget_check;
  double budget_tolerance = 0.02;
};

/// Column order of the delimited format.
inline constexpr const char* kRunColumns[] = {
    "r", "s", "l_eff", "n_prelude", "n_coda", "injection", "bptt", "r_bwd",
    "budget_flops", "tokens", "val_loss", "variant"};

/// Parses runs. Malformed rows raise ParseError (row and field named);
/// invariant failures raise ValidationError listing every offending row.
/// Row numbers count data rows from 1.
std::vector<RunRecord> load_runs(std::istream& in, RunFormat format, const LoadOptions& options = {});
std::vector<RunRecord> load_runs_file(const std::string& path, const LoadOptions& options = {});
/// Picks structured for .json, delimited otherwise.
RunFormat format_for_path(const std::string& path);

void write_runs(std::ostream& out, const std::vector<RunRecord>& runs);

struct GridCell {
  ModelShape shape;
  TrainingRecipe recipe;
  double budget = 0.0;
  double n_params = 0.0;
  double tokens = 0.0;
};

struct GridOptions {
  std::vector<double> budgets;
  std::vector<int> scales;
  std::vector<int> r_values;
  /// Injection for r > 1 cells.
  Injection injection = Injection::linear();
  /// Full or truncated; truncated uses ceil(r/2) unless r_bwd is set, and is
  /// applied to r > 1 cells only.
  BpttMode bptt = BpttMode::full;
  int r_bwd = 0;
  FlopsConvention convention = FlopsConvention::empirical;
  ParamCounting counting = ParamCounting::core;
  /// Keep cells whose token count lies inside [min_tokens, max_tokens].
  std::optional<double> min_tokens;
  std::optional<double> max_tokens;
  /// Keep a cell only if keep(scale, budget) is true. Applied to every r.
  std::function<bool(int, double)> keep;
};

/// One cell per (budget, scale, r) in that nesting order, after filters.
std::vector<GridCell> plan_grid(const GridOptions& options);

/// The six budgets of the reference iso-depth sweep.
std::vector<double> reference_budgets();
/// The eleven widths of the reference sweep.
std::vector<int> reference_scales();
/// Whether the reference sweep trained width s at `budget`.
bool reference_cell_trained(int s, double budget);
/// The reference sparse grid: trained (s, budget) cells for r in {1, 2, 4, 8},
/// 116 cells in all.
GridOptions reference_grid_options();

struct SyntheticSpec {
  JointParams truth;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::string variant = "synthetic";
};

/// Loss L = law(truth) * exp(noise_sigma z), z ~ N(0, 1) from the seeded
/// generator. Deterministic given cell order and spec.
std::vector<RunRecord> synthesize_runs(const std::vector<GridCell>& grid, const SyntheticSpec& spec);

/// C rounded to three significant figures.
double budget_key(double budget);

struct Cell {
  double budget = 0.0;  // rounded key
  int r = 1;
  std::vector<std::size_t> members;  // indices into the run list, in order
};

/// Partition keyed by (budget to 3 s.f., r), ordered by budget then r.
std::vector<Cell> group_cells(const std::vector<RunRecord>& runs);

}  // namespace loopscale
