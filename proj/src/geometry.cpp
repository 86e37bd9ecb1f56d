#include "loopscale/geometry.hpp"

#include <cmath>
#include <string>

#include "loopscale/errors.hpp"

namespace loopscale {

namespace {

// Per-iteration mixing scalars of a hyperconnection block: alpha (K),
// M (K x K), beta (K).
double hyper_scalars_per_iteration(int lanes) {
  return static_cast<double>(lanes) * lanes + 2.0 * lanes;
}

// Parameters added to the shared block by the injection, counted once.
double injection_unique_params(const ModelShape& shape, double d) {
  switch (shape.injection.kind) {
    case InjectionKind::linear:
      return injection_params(d);
    case InjectionKind::hyper:
      return shape.r * hyper_scalars_per_iteration(shape.injection.lanes);
    case InjectionKind::none:
    case InjectionKind::additive:
      return 0.0;
  }
  return 0.0;
}

// Forward FLOPs of the injection in one recurrence.
double injection_iteration_flops(const ModelShape& shape, double d) {
  switch (shape.injection.kind) {
    case InjectionKind::linear:
      return 2.0 * injection_params(d);
    case InjectionKind::hyper:
      return 2.0 * hyper_scalars_per_iteration(shape.injection.lanes) * d;
    case InjectionKind::none:
    case InjectionKind::additive:
      return 0.0;
  }
  return 0.0;
}

double attention_flops_per_layer(const ModelShape& shape, double d) {
  return 4.0 * shape.seq_len * d;
}

void require_width(double d) {
  if (!(d > 0.0) || !std::isfinite(d)) {
    throw DomainError("width must be positive and finite, got " + std::to_string(d));
  }
}

}  // namespace

std::string Injection::to_string() const {
  switch (kind) {
    case InjectionKind::none:
      return "none";
    case InjectionKind::linear:
      return "linear";
    case InjectionKind::additive:
      return "additive";
    case InjectionKind::hyper:
      return "hyper:" + std::to_string(lanes);
  }
  return "none";
}

Injection Injection::parse(const std::string& text) {
  if (text == "none") return none();
  if (text == "linear") return linear();
  if (text == "additive") return additive();
  if (text.rfind("hyper:", 0) == 0) {
    const std::string count = text.substr(6);
    std::size_t used = 0;
    int lanes = 0;
    try {
      lanes = std::stoi(count, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != count.size() || lanes < 1) {
      throw ShapeError("bad hyperconnection lane count in '" + text + "'");
    }
    return hyper(lanes);
  }
  throw ShapeError("unknown injection '" + text + "' (expected none, linear, additive, hyper:<K>)");
}

int ModelShape::n_recur() const {
  const int shared = l_eff - n_prelude - n_coda;
  if (r < 1 || shared <= 0 || shared % r != 0) return 0;
  return shared / r;
}

void ModelShape::validate() const {
  if (r < 1) throw ShapeError("recurrence count r must be >= 1, got " + std::to_string(r));
  if (s < 1) throw ShapeError("width scale s must be >= 1, got " + std::to_string(s));
  if (n_prelude < 0 || n_coda < 0) throw ShapeError("prelude/coda layer counts must be >= 0");
  if (seq_len < 1 || vocab < 1) throw ShapeError("seq_len and vocab must be positive");
  const int shared = l_eff - n_prelude - n_coda;
  if (shared <= 0) {
    throw ShapeError("L_eff - n_prelude - n_coda must be positive, got " + std::to_string(shared));
  }
  if (shared % r != 0) {
    throw ShapeError("L_eff - n_prelude - n_coda = " + std::to_string(shared) +
                     " is not divisible by r = " + std::to_string(r));
  }
  if (r == 1 && injection.kind != InjectionKind::none) {
    throw ShapeError("r = 1 shapes take no injection, got " + injection.to_string());
  }
  if (r > 1 && injection.kind == InjectionKind::none) {
    throw ShapeError("looped shapes (r > 1) need an injection");
  }
  if (injection.kind == InjectionKind::hyper && injection.lanes < 1) {
    throw ShapeError("hyperconnections need at least one lane");
  }
}

ModelShape ModelShape::baseline(int s) {
  ModelShape shape;
  shape.s = s;
  return shape;
}

ModelShape ModelShape::looped(int s, int r, Injection injection) {
  ModelShape shape;
  shape.s = s;
  shape.r = r;
  shape.injection = r == 1 ? Injection::none() : injection;
  return shape;
}

void TrainingRecipe::validate_for(const ModelShape& shape) const {
  if (bptt == BpttMode::full) return;
  if (shape.r == 1) throw RecipeMismatchError("truncated BPTT requires a looped shape (r > 1)");
  if (r_bwd < 1 || r_bwd > shape.r) {
    throw RecipeMismatchError("gradient window r_bwd = " + std::to_string(r_bwd) +
                              " must lie in [1, r = " + std::to_string(shape.r) + "]");
  }
}

double block_params(double d_model, ParamCounting counting) {
  const double core = 12.0 * d_model * d_model;
  return counting == ParamCounting::with_norms ? core + 2.0 * d_model : core;
}

double injection_params(double d_model) { return 2.0 * d_model * d_model; }

double unique_params(const ModelShape& shape, ParamCounting counting) {
  return unique_params_at(shape, shape.d_model(), counting);
}

double unique_params_at(const ModelShape& shape, double d_model, ParamCounting counting) {
  return param_split_at(shape, d_model, counting).total();
}

ParamSplit param_split(const ModelShape& shape, ParamCounting counting) {
  return param_split_at(shape, shape.d_model(), counting);
}

ParamSplit param_split_at(const ModelShape& shape, double d_model, ParamCounting counting) {
  shape.validate();
  require_width(d_model);
  const double nb = block_params(d_model, counting);
  ParamSplit split;
  split.once = (shape.n_prelude + shape.n_coda) * nb;
  split.recurrent = shape.n_recur() * nb + injection_unique_params(shape, d_model);
  return split;
}

double forward_flops_per_token(const ModelShape& shape, FlopsConvention conv) {
  return forward_flops_at(shape, shape.d_model(), conv);
}

double forward_flops_at(const ModelShape& shape, double d_model, FlopsConvention conv) {
  shape.validate();
  require_width(d_model);
  const double nb = block_params(d_model);
  double flops = 2.0 * shape.l_eff * nb + shape.r * injection_iteration_flops(shape, d_model);
  if (conv == FlopsConvention::empirical) {
    flops += shape.l_eff * attention_flops_per_layer(shape, d_model);
    flops += 2.0 * d_model * shape.vocab;
  }
  return flops;
}

double iteration_forward_flops_at(const ModelShape& shape, double d_model, FlopsConvention conv) {
  shape.validate();
  require_width(d_model);
  double flops = 2.0 * shape.n_recur() * block_params(d_model) +
                 injection_iteration_flops(shape, d_model);
  if (conv == FlopsConvention::empirical) {
    flops += shape.n_recur() * attention_flops_per_layer(shape, d_model);
  }
  return flops;
}

double train_flops_per_token(const ModelShape& shape, const TrainingRecipe& recipe,
                             FlopsConvention conv) {
  return train_flops_at(shape, shape.d_model(), recipe, conv);
}

double train_flops_at(const ModelShape& shape, double d_model, const TrainingRecipe& recipe,
                      FlopsConvention conv) {
  recipe.validate_for(shape);
  const double full = 3.0 * forward_flops_at(shape, d_model, conv);
  if (recipe.bptt == BpttMode::full) return full;
  // Detached iterations pay the forward pass only: 2x instead of 6x per
  // parameter, i.e. they save two forward passes each.
  const int detached = shape.r - recipe.r_bwd;
  return full - 2.0 * detached * iteration_forward_flops_at(shape, d_model, conv);
}

double injection_overhead(const ModelShape& shape) {
  shape.validate();
  const double d = shape.d_model();
  return shape.r * injection_iteration_flops(shape, d) / (2.0 * shape.l_eff * block_params(d));
}

double tokens_for_budget(double budget, const ModelShape& shape, const TrainingRecipe& recipe,
                         FlopsConvention conv) {
  if (!(budget > 0.0) || !std::isfinite(budget)) {
    throw DomainError("compute budget must be positive, got " + std::to_string(budget));
  }
  return budget / train_flops_per_token(shape, recipe, conv);
}

double width_from_unique_params(double n_params, const ModelShape& layout, ParamCounting counting) {
  if (!(n_params > 0.0) || !std::isfinite(n_params)) {
    throw DomainError("parameter count must be positive, got " + std::to_string(n_params));
  }
  ModelShape shape = layout;
  shape.s = 1;
  shape.validate();
  // N(d) = q d^2 + l d + c
  const double layers = shape.unique_layers();
  double q = 12.0 * layers;
  const double l = counting == ParamCounting::with_norms ? 2.0 * layers : 0.0;
  double c = 0.0;
  if (shape.injection.kind == InjectionKind::linear) q += 2.0;
  if (shape.injection.kind == InjectionKind::hyper) {
    c = shape.r * hyper_scalars_per_iteration(shape.injection.lanes);
  }
  const double rhs = n_params - c;
  if (!(rhs > 0.0)) {
    throw DomainError("parameter count " + std::to_string(n_params) +
                      " is below the width-independent floor " + std::to_string(c));
  }
  if (l == 0.0) return std::sqrt(rhs / q);
  // Positive root of q d^2 + l d - rhs, in the cancellation-free form.
  return 2.0 * rhs / (l + std::sqrt(l * l + 4.0 * q * rhs));
}

std::string to_string(FlopsConvention conv) {
  return conv == FlopsConvention::empirical ? "empirical" : "parameter_only";
}

FlopsConvention parse_convention(const std::string& text) {
  if (text == "empirical") return FlopsConvention::empirical;
  if (text == "parameter_only" || text == "param") return FlopsConvention::parameter_only;
  throw UsageError("unknown FLOPs convention '" + text + "' (expected empirical, parameter_only)");
}

std::string to_string(BpttMode mode) { return mode == BpttMode::full ? "full" : "trunc"; }

}  // namespace loopscale
