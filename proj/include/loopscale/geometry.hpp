#pragma once

// Parameter and per-token FLOPs accounting for prelude-recur-coda transformers.
//
// A shape executes n_prelude unshared layers, a shared block of n_recur layers
// r times, then n_coda unshared layers, for L_eff = n_prelude + r*n_recur +
// n_coda executed layers per token. The width is d_model = 64*s.
//
// Two FLOPs conventions are supported. parameter_only is the classic 2N / 6N
// rule over executed non-embedding parameters. empirical additionally counts
// attention scores (4*T*d per executed layer, full context) and the
// unembedding matmul (2*d*V); it is calibrated against published token counts
// rather than taken from a stated formula.

#include <string>
#include <utility>

namespace loopscale {

enum class InjectionKind {
  none,      // r == 1 only
  linear,    // 2d -> d projection per recurrence, n_i = 2 d^2
  additive,  // parameter-free merge of prelude output into the state
  hyper,     // K residual lanes mixed by r*(K^2 + 2K) scalars
};

struct Injection {
  InjectionKind kind = InjectionKind::none;
  int lanes = 0;  // K, hyper only

  static Injection none() { return {}; }
  static Injection linear() { return {InjectionKind::linear, 0}; }
  static Injection additive() { return {InjectionKind::additive, 0}; }
  static Injection hyper(int lanes) { return {InjectionKind::hyper, lanes}; }

  /// "none", "linear", "additive" or "hyper:<K>".
  std::string to_string() const;
  static Injection parse(const std::string& text);

  friend bool operator==(const Injection&, const Injection&) = default;
};

struct ModelShape {
  int r = 1;
  int s = 1;
  int l_eff = 20;
  int n_prelude = 2;
  int n_coda = 2;
  Injection injection = Injection::none();
  int seq_len = 2048;
  int vocab = 32064;

  double d_model() const { return 64.0 * s; }
  /// Layers in the shared block; zero if the partition is invalid.
  int n_recur() const;
  /// Layers with their own weights: n_prelude + n_recur + n_coda.
  int unique_layers() const { return n_prelude + n_recur() + n_coda; }

  /// Throws ShapeError on any broken invariant.
  void validate() const;

  /// Baseline r=1 shape at scale s with default partition.
  static ModelShape baseline(int s);
  /// Looped shape with linear injection at scale s.
  static ModelShape looped(int s, int r, Injection injection = Injection::linear());

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

enum class BpttMode { full, truncated };

struct TrainingRecipe {
  BpttMode bptt = BpttMode::full;
  int r_bwd = 0;  // truncated only

  static TrainingRecipe full() { return {}; }
  static TrainingRecipe truncated(int r_bwd) { return {BpttMode::truncated, r_bwd}; }
  /// Gradient window ceil(r/2).
  static TrainingRecipe truncated_default(int r) { return truncated((r + 1) / 2); }

  /// Throws RecipeMismatchError if the recipe cannot apply to `shape`.
  void validate_for(const ModelShape& shape) const;

  friend bool operator==(const TrainingRecipe&, const TrainingRecipe&) = default;
};

enum class FlopsConvention { parameter_only, empirical };

/// How a block's parameters are counted. core is 12 d^2 (attention
/// projections and MLP). with_norms adds the two RMSNorm scale vectors per
/// block, 2d, which the published grid table includes.
enum class ParamCounting { core, with_norms };

double block_params(double d_model, ParamCounting counting = ParamCounting::core);
double injection_params(double d_model);

/// Unique non-embedding parameters. Every function taking a width accepts a
/// real-valued d so that allocation searches can treat width as continuous;
/// the overloads without a width use shape.d_model().
double unique_params(const ModelShape& shape, ParamCounting counting = ParamCounting::core);
double unique_params_at(const ModelShape& shape, double d_model,
                        ParamCounting counting = ParamCounting::core);

struct ParamSplit {
  double once = 0.0;       // prelude + coda
  double recurrent = 0.0;  // shared block + injection
  double total() const { return once + recurrent; }
};

ParamSplit param_split(const ModelShape& shape, ParamCounting counting = ParamCounting::core);
ParamSplit param_split_at(const ModelShape& shape, double d_model,
                          ParamCounting counting = ParamCounting::core);

double forward_flops_per_token(const ModelShape& shape, FlopsConvention conv);
double forward_flops_at(const ModelShape& shape, double d_model, FlopsConvention conv);

/// Forward cost of one pass through the shared block, injection included.
double iteration_forward_flops_at(const ModelShape& shape, double d_model,
                                  FlopsConvention conv);

double train_flops_per_token(const ModelShape& shape, const TrainingRecipe& recipe,
                             FlopsConvention conv);
double train_flops_at(const ModelShape& shape, double d_model, const TrainingRecipe& recipe,
                      FlopsConvention conv);

/// Injection share of parameter-only forward FLOPs relative to the injection
/// free cost, e.g. r/120 for linear injection at the default partition.
double injection_overhead(const ModelShape& shape);

/// D = C / F_train, as a real number of tokens.
double tokens_for_budget(double budget, const ModelShape& shape, const TrainingRecipe& recipe,
                         FlopsConvention conv);

/// Inverse of unique_params_at over width. Only the layout fields of `layout`
/// are used (r, partition, injection); its s is ignored.
double width_from_unique_params(double n_params, const ModelShape& layout,
                                ParamCounting counting = ParamCounting::core);

std::string to_string(FlopsConvention conv);
FlopsConvention parse_convention(const std::string& text);
std::string to_string(BpttMode mode);

}  // namespace loopscale
