#include "loopscale/law.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "loopscale/errors.hpp"

namespace loopscale {

namespace {

struct LogNeff {
  double value;
  double d_phi;  // d log N_eff / d phi
};

LogNeff log_effective_params(double n_once, double n_rec, double log_r, double phi) {
  const double scale = std::exp(phi * log_r);
  const double scaled_rec = scale * n_rec;
  const double n_eff = n_once + scaled_rec;
  return {std::log(n_eff), scaled_rec * log_r / n_eff};
}

}  // namespace

double ChinchillaParams::amplitude_a() const { return std::exp(a); }
double ChinchillaParams::amplitude_b() const { return std::exp(b); }
double ChinchillaParams::irreducible() const { return std::exp(e); }

ChinchillaParams ChinchillaParams::from_amplitudes(double A, double alpha, double B, double beta,
                                                   double E) {
  if (!(A > 0.0 && B > 0.0 && E > 0.0)) {
    throw DomainError("amplitudes A, B, E must be positive");
  }
  return {std::log(A), alpha, std::log(B), beta, std::log(E)};
}

double effective_params(double n_once, double n_rec, double r, double phi) {
  return n_once + std::pow(r, phi) * n_rec;
}

void check_law_inputs(const LawInputs& in) {
  if (!(in.n_once >= 0.0) || !(in.n_rec >= 0.0) || !(in.n_once + in.n_rec > 0.0)) {
    throw DomainError("need N_once >= 0, N_rec >= 0 and N_once + N_rec > 0");
  }
  if (!(in.tokens > 0.0)) throw DomainError("token count D must be positive");
  if (!(in.r >= 1.0)) throw DomainError("recurrence count r must be >= 1");
}

double predict_log_loss(const JointParams& p, const LawInputs& in, TermMask mask) {
  check_law_inputs(in);
  const double log_neff = log_effective_params(in.n_once, in.n_rec, std::log(in.r), p.phi).value;
  constexpr double kOff = -std::numeric_limits<double>::infinity();
  const double t1 = mask.param_term ? p.law.a - p.law.alpha * log_neff : kOff;
  const double t2 = mask.data_term ? p.law.b - p.law.beta * std::log(in.tokens) : kOff;
  const double t3 = p.law.e;
  const double m = std::max({t1, t2, t3});
  return m + std::log(std::exp(t1 - m) + std::exp(t2 - m) + std::exp(t3 - m));
}

double predict_loss(const JointParams& p, const LawInputs& in, TermMask mask) {
  return std::exp(predict_log_loss(p, in, mask));
}

double predict_loss(const ChinchillaParams& p, double n_params, double tokens) {
  return predict_loss(JointParams{p, 0.0}, LawInputs{n_params, 0.0, 1.0, tokens});
}

HuberValue huber(double residual, double delta) {
  const double mag = std::abs(residual);
  if (mag <= delta) return {0.5 * residual * residual, residual};
  return {delta * (mag - 0.5 * delta), residual > 0.0 ? delta : -delta};
}

Observation Observation::make(double n_once, double n_rec, double r, double tokens, double loss) {
  check_law_inputs({n_once, n_rec, r, tokens});
  if (!(loss > 0.0) || !std::isfinite(loss)) throw DomainError("loss must be positive and finite");
  return {n_once, n_rec, r, tokens, loss, std::log(r), std::log(tokens), std::log(loss)};
}

ObjectiveValue objective(const JointParams& p, std::span<const Observation> obs, double delta) {
  if (obs.empty()) throw UsageError("objective needs at least one run");
  ObjectiveValue out;
  auto& g = out.gradient;
  for (const Observation& o : obs) {
    const LogNeff neff = log_effective_params(o.n_once, o.n_rec, o.log_r, p.phi);
    const double t1 = p.law.a - p.law.alpha * neff.value;
    const double t2 = p.law.b - p.law.beta * o.log_tokens;
    const double t3 = p.law.e;
    const double m = std::max({t1, t2, t3});
    const double e1 = std::exp(t1 - m);
    const double e2 = std::exp(t2 - m);
    const double e3 = std::exp(t3 - m);
    const double sum = e1 + e2 + e3;
    const double lse = m + std::log(sum);
    const HuberValue h = huber(lse - o.log_loss, delta);
    out.value += h.value;
    // Softmax weights of the three terms.
    const double w1 = h.derivative * e1 / sum;
    const double w2 = h.derivative * e2 / sum;
    const double w3 = h.derivative * e3 / sum;
    g[kA] += w1;
    g[kAlpha] -= w1 * neff.value;
    g[kB] += w2;
    g[kBeta] -= w2 * o.log_tokens;
    g[kE] += w3;
    g[kPhi] -= w1 * p.law.alpha * neff.d_phi;
  }
  return out;
}

HuberLogObjective::HuberLogObjective(std::vector<Observation> obs, double delta, bool phi_free,
                                     double fixed_phi)
    : obs_(std::move(obs)), delta_(delta), phi_free_(phi_free), fixed_phi_(fixed_phi) {
  if (obs_.empty()) throw UsageError("objective needs at least one run");
  if (!(delta_ > 0.0)) throw UsageError("Huber delta must be positive");
}

double HuberLogObjective::operator()(std::span<const double> x, std::span<double> grad) const {
  const ObjectiveValue v = objective(unpack(x), obs_, delta_);
  std::copy_n(v.gradient.begin(), dimension(), grad.begin());
  return v.value;
}

JointParams HuberLogObjective::unpack(std::span<const double> x) const {
  return {{x[kA], x[kAlpha], x[kB], x[kBeta], x[kE]}, phi_free_ ? x[kPhi] : fixed_phi_};
}

std::vector<double> HuberLogObjective::pack(const JointParams& p) const {
  std::vector<double> x{p.law.a, p.law.alpha, p.law.b, p.law.beta, p.law.e};
  if (phi_free_) x.push_back(p.phi);
  return x;
}

double r_squared(const JointParams& p, std::span<const Observation> obs) {
  if (obs.empty()) throw UsageError("R^2 needs at least one run");
  double mean = 0.0;
  for (const Observation& o : obs) mean += o.loss;
  mean /= static_cast<double>(obs.size());
  double ss_tot = 0.0;
  double ss_res = 0.0;
  for (const Observation& o : obs) {
    const double pred =
        predict_loss(p, LawInputs{o.n_once, o.n_rec, o.r, o.tokens});
    ss_res += (o.loss - pred) * (o.loss - pred);
    ss_tot += (o.loss - mean) * (o.loss - mean);
  }
  if (ss_tot == 0.0) throw UsageError("R^2 is undefined when every loss is equal");
  return 1.0 - ss_res / ss_tot;
}

}  // namespace loopscale
