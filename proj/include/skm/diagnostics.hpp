#pragma once

#include <span>
#include <string>
#include <vector>

namespace skm {

/// Per-run performance summary, one row of the metrics CSV.
struct MetricRecord {
  std::string run_id;
  std::string scenario;  // "CO" or "PO"
  std::string sampler;   // "npmc" or "pmmh"
  std::vector<double> mse;  // per inferred parameter
  double mean_mse = 0.0;
  double ness = 0.0;
  double acceptance_rate = -1.0;  // MCMC only; negative when not applicable
};

/// (1/M) sum_i (theta_k^(i) - truth)^2 over the chain's k-th component.
double mse_chain(const std::vector<std::vector<double>>& samples, double truth, std::size_t k);

/// (mean - truth)^2 + variance.
double mse_moments(double mean, double variance, double truth);

/// MSE of a U(lo, hi) prior around the true value.
double prior_mse_uniform(double lo, double hi, double truth);

/// Biased sample autocorrelation of one series at lags 0..max_lag.
/// Throws PreconditionError for a constant series or max_lag >= length.
std::vector<double> acf_series(std::span<const double> x, std::size_t max_lag);

/// Autocorrelation of a multivariate chain at lags 0..max_lag, averaged over
/// the components.
std::vector<double> acf(const std::vector<std::vector<double>>& chain, std::size_t max_lag);

/// 1 / (1 + 2 sum_j rho(j)), summing j = 1, 2, ... up to (not including) the
/// first lag with rho(j) < 0.1. Clamped to [1/length, 1] where length is the
/// chain length implied by `floor`.
double ness_from_acf(std::span<const double> rho, double floor);

/// MCMC normalized effective sample size of a chain.
double ness_mcmc(const std::vector<std::vector<double>>& chain);

/// 1 / (M sum w^2) for normalized weights.
double ness_is(std::span<const double> weights);

}  // namespace skm
