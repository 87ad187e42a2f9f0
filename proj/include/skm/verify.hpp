#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "skm/gillespie.hpp"
#include "skm/network.hpp"

namespace skm::verify {

// ---------------------------------------------------------------------------
// Deterministic clipping bound
// ---------------------------------------------------------------------------

struct ClippingBoundResult {
  double lhs = 0.0;  // |(f, clipped) - (f, plain)|
  double rhs = 0.0;  // 2 a^2 ||f|| M_T / M
  bool pass = false;
};

/// Compares the self-normalized estimates of f under plain and clipped
/// weights against 2 a^2 ||f||_inf M_T / M. `weights` are unnormalized and
/// must lie in [1/a, a] (PreconditionError otherwise).
ClippingBoundResult check_clipping_bound(std::span<const double> f, std::span<const double> weights,
                                         std::size_t clip, double a);

struct ClippingSweepResult {
  std::size_t trials = 0;
  std::size_t failures = 0;
  double worst_ratio = 0.0;  // max lhs / rhs
};

/// Random (f, w) draws with w uniform in log-space over [1/a, a] and
/// |f| <= 1.
ClippingSweepResult clipping_bound_sweep(std::size_t trials, std::size_t samples, std::size_t clip, double a,
                                         std::uint64_t seed);

// ---------------------------------------------------------------------------
// Two-state toy model with an enumerable likelihood
// ---------------------------------------------------------------------------

/// A <-> B with one molecule: state (1,0) or (0,1). theta = log of the A->B
/// rate; the B->A rate is fixed. y_n = x_A + noise.
struct TwoStateToy {
  double log_back_rate = 0.0;
  double delta = 1.0;
  double noise_variance = 0.25;
  std::vector<double> y;

  ReactionNetwork network() const;
  PriorSpec priors(double theta_lo = -10.0, double theta_hi = 10.0) const;
  ObservationSet observations() const;
  /// Full log-rate vector for a given theta.
  std::vector<double> full_theta(double theta) const;
  /// Exact p(y | theta), summing over every latent path x_0..x_N.
  double exact_likelihood(double theta) const;

  /// Default instance: N observations simulated at theta = 0 from `seed`.
  static TwoStateToy make(std::size_t steps, std::uint64_t seed);
};

// ---------------------------------------------------------------------------
// Convergence-rate checks
// ---------------------------------------------------------------------------

struct RateCheckConfig {
  std::vector<std::size_t> grid{100, 1000, 10000};
  std::size_t replicates = 100;
  /// Weight box [1/a, a] the importance weights must live in.
  double a = 10.0;
  /// Target N(target_mean, target_sd^2) and Student-t proposal, both
  /// truncated to [-support, support].
  double support = 3.0;
  double target_mean = 0.5;
  double target_sd = 1.0;
  double proposal_dof = 3.0;
  double proposal_scale = 1.5;
  double slope_lo = -0.65;
  double slope_hi = -0.35;
  std::uint64_t seed = 20240601;

  void validate() const;
};

struct RateCheckResult {
  std::string name;
  std::vector<std::size_t> grid;
  std::vector<double> mean_abs_error;
  double slope = 0.0;
  bool pass = false;
};

struct IsRateResult {
  RateCheckResult plain;
  RateCheckResult clipped;
  double truth = 0.0;
  /// |mean(clipped) - mean(plain)| at the largest grid point, and the
  /// replicate standard deviation of the plain estimate there.
  double limit_gap = 0.0;
  double limit_sd = 0.0;
  bool limit_pass = false;
};

/// Plain and clipped (M_T = ceil(sqrt(M))) importance sampling of
/// E[sigmoid(2 theta)] under the truncated Gaussian target.
IsRateResult check_is_rate(const RateCheckConfig& cfg);

struct PfRateConfig {
  TwoStateToy toy = TwoStateToy::make(3, 7);
  std::vector<double> theta_grid;  // default: 20 points on [-1, 1]
  std::vector<std::size_t> particle_grid{100, 1000, 10000};
  std::size_t replicates = 200;
  double slope_lo = -0.65;
  double slope_hi = -0.35;
  std::uint64_t seed = 20240602;
};

/// sup over the theta grid of |lambda^J(theta) - lambda(theta)|, averaged over
/// replicates, against J.
RateCheckResult check_pf_likelihood_rate(const PfRateConfig& cfg);

struct NisPfRateConfig {
  TwoStateToy toy = TwoStateToy::make(3, 7);
  std::vector<std::size_t> grid{32, 128, 512};
  std::size_t replicates = 50;
  double theta_lo = -1.5;
  double theta_hi = 1.5;
  double proposal_mean = 0.0;
  double proposal_sd = 1.0;
  double slope_lo = -0.65;
  double slope_hi = -0.35;
  std::uint64_t seed = 20240603;
};

/// Importance sampling of the toy posterior with weights built from particle
/// filter likelihood estimates (J = M), plain and clipped.
IsRateResult check_nis_pf_rate(const NisPfRateConfig& cfg);

/// Ordinary least-squares slope of log(err) against log(n).
double loglog_slope(std::span<const std::size_t> n, std::span<const double> err);

nlohmann::json to_json(const RateCheckResult& r);
nlohmann::json to_json(const IsRateResult& r);

}  // namespace skm::verify
