#pragma once

// Loss laws and the robust log-space objective used to fit them.
//
//   Chinchilla:  L = E + A N^-alpha + B D^-beta
//   Joint:       L = E + A (N_once + r^phi N_rec)^-alpha + B D^-beta
//
// Amplitudes live in log space (a = log A, b = log B, e = log E), and the
// log of the prediction is a log-sum-exp of (a - alpha log N_eff,
// b - beta log D, e). The fitting objective sums Huber penalties of the
// log residuals.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace loopscale {

struct ChinchillaParams {
  double a = 0.0;
  double alpha = 0.0;
  double b = 0.0;
  double beta = 0.0;
  double e = 0.0;

  double amplitude_a() const;
  double amplitude_b() const;
  double irreducible() const;

  /// From linear-scale amplitudes (A, B, E > 0).
  static ChinchillaParams from_amplitudes(double A, double alpha, double B, double beta, double E);
};

struct JointParams {
  ChinchillaParams law;
  double phi = 0.0;
};

/// Order of coordinates in packed parameter vectors.
enum Coord : std::size_t { kA = 0, kAlpha = 1, kB = 2, kBeta = 3, kE = 4, kPhi = 5 };
inline constexpr std::size_t kJointDim = 6;

struct LawInputs {
  double n_once = 0.0;
  double n_rec = 0.0;
  double r = 1.0;
  double tokens = 0.0;
};

/// Disables the parameter or data term, standing in for A = 0 or B = 0,
/// which log amplitudes cannot represent.
struct TermMask {
  bool param_term = true;
  bool data_term = true;
};

/// N_once + r^phi N_rec.
double effective_params(double n_once, double n_rec, double r, double phi);

/// Throws DomainError unless N_once, N_rec >= 0, N_once + N_rec > 0, D > 0, r >= 1.
void check_law_inputs(const LawInputs& in);

double predict_log_loss(const JointParams& p, const LawInputs& in, TermMask mask = {});
double predict_loss(const JointParams& p, const LawInputs& in, TermMask mask = {});
/// Chinchilla form at total unique parameters n.
double predict_loss(const ChinchillaParams& p, double n_params, double tokens);

struct HuberValue {
  double value;
  double derivative;
};

/// r^2/2 inside |r| <= delta, delta (|r| - delta/2) outside.
HuberValue huber(double residual, double delta);

/// One run as the objective sees it.
struct Observation {
  double n_once = 0.0;
  double n_rec = 0.0;
  double r = 1.0;
  double tokens = 0.0;
  double loss = 0.0;
  double log_r = 0.0;
  double log_tokens = 0.0;
  double log_loss = 0.0;

  static Observation make(double n_once, double n_rec, double r, double tokens, double loss);
};

struct ObjectiveValue {
  double value = 0.0;
  std::array<double, kJointDim> gradient{};
};

/// Sum over observations of huber(LSE(...) - log L_i) and its gradient in
/// (a, alpha, b, beta, e, phi). Throws UsageError on an empty set.
ObjectiveValue objective(const JointParams& p, std::span<const Observation> obs, double delta);

/// The objective restricted to the coordinates a fit actually moves. With a
/// fixed phi the vector is (a, alpha, b, beta, e); otherwise phi is appended.
/// Chinchilla fits are fixed-phi fits at phi = 0, where r^phi = 1.
class HuberLogObjective {
 public:
  HuberLogObjective(std::vector<Observation> obs, double delta, bool phi_free, double fixed_phi);

  std::size_t dimension() const { return phi_free_ ? 6 : 5; }
  double operator()(std::span<const double> x, std::span<double> grad) const;

  JointParams unpack(std::span<const double> x) const;
  std::vector<double> pack(const JointParams& p) const;

  std::span<const Observation> observations() const { return obs_; }
  double delta() const { return delta_; }

 private:
  std::vector<Observation> obs_;
  double delta_;
  bool phi_free_;
  double fixed_phi_;
};

/// 1 - SS_res / SS_tot on raw losses. Throws UsageError when all losses are
/// equal.
double r_squared(const JointParams& p, std::span<const Observation> obs);

}  // namespace loopscale
