#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "skm/gillespie.hpp"
#include "skm/random.hpp"
#include "skm/sampling_target.hpp"

namespace skm {

struct PmmhConfig {
  std::size_t iterations = 10'000;  // I
  std::size_t burn_in = 1'000;      // B
  std::size_t thin = 9;             // T
  double proposal_variance = 1.0;   // gamma^2 of the isotropic random walk
  std::size_t particles = 100;      // J
  std::uint64_t seed = 1;
  std::size_t init_retry_cap = 100;
  /// Keep the retained latent paths x^(i).
  bool keep_paths = true;

  void validate() const;
  std::size_t retained_count() const { return (iterations - burn_in) / thin; }
};

struct ChainOutput {
  /// theta^(0..I), pre-thinning, free components only.
  std::vector<std::vector<double>> theta;
  /// Stored likelihood estimate log p^J(y | theta^(i)), i = 0..I.
  std::vector<double> log_likelihood;
  /// Fresh estimate computed for the candidate at iteration i = 1..I (index i-1).
  std::vector<double> candidate_log_likelihood;
  /// Acceptance indicator for i = 1..I (index i-1).
  std::vector<std::uint8_t> accepted;
  double acceptance_rate = 0.0;
  /// Retained iteration indices B+T, B+2T, ...
  std::vector<std::size_t> retained;
  std::vector<std::vector<double>> retained_theta;
  std::vector<Trajectory> retained_paths;
  std::size_t init_attempts = 0;
};

/// theta + eps, eps ~ N(0, gamma2 I). gamma2 = 0 returns theta unchanged.
std::vector<double> propose_theta(std::span<const double> theta, double gamma2, Rng& rng);

/// log of the symmetric random-walk proposal density q(to | from).
double log_proposal_density(std::span<const double> to, std::span<const double> from, double gamma2);

/// min(0, (ll* + lp*) - (ll + lp)). The random-walk proposal ratio is 1.
/// Throws PreconditionError when both current and candidate are -inf.
double log_acceptance(double loglik_star, double logprior_star, double loglik_cur, double logprior_cur);

/// Iteration indices kept after dropping `burn_in` and keeping every `thin`-th.
std::vector<std::size_t> postprocess(std::size_t iterations, std::size_t burn_in, std::size_t thin);

/// Particle-marginal Metropolis-Hastings over the target's parameters.
ChainOutput run_pmmh(const SamplingTarget& target, const PmmhConfig& cfg);

/// Convenience wrapper building a KineticModelTarget with cfg.particles.
ChainOutput run_pmmh(const ReactionNetwork& network, const PriorSpec& priors, const ObservationSet& obs,
                     const ParameterLayout& layout, const PmmhConfig& cfg, const FilterOptions& filter = {});

void write_chain_csv(std::ostream& os, const ChainOutput& chain);

}  // namespace skm
