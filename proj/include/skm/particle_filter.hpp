#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "skm/gillespie.hpp"
#include "skm/network.hpp"
#include "skm/random.hpp"

namespace skm {

struct FilterOptions {
  /// Per-particle, per-interval SSA event cap. Hitting it marks the filter
  /// degenerate (the likelihood estimate becomes 0).
  std::uint64_t event_cap = kDefaultEventCap;
  /// Store per-step states and ancestry so paths can be sampled afterwards.
  bool keep_paths = true;
  /// Store the unnormalized per-step log-weights of every particle.
  bool record_weights = false;
  /// Propagate particles concurrently. Output does not depend on this flag.
  bool parallel = false;
};

/// J weighted particle paths after n assimilated observations.
///
/// Paths are stored as per-step states plus the resampling ancestry, so the
/// path of any final particle is rebuilt by walking its ancestors back.
class ParticleEnsemble {
 public:
  std::size_t particle_count() const { return particles_; }
  std::size_t steps() const { return steps_; }
  bool has_paths() const { return keep_paths_; }
  /// Normalized weights of the particles at the last assimilated step,
  /// before that step's resampling.
  std::span<const double> last_weights() const { return last_weights_; }
  double log_likelihood() const { return log_likelihood_; }
  /// x_{0:n} of particle j at the last step (pre-resampling indexing).
  Trajectory path(std::size_t j) const;

 private:
  friend class FilterRun;
  std::size_t particles_ = 0;
  std::size_t species_ = 0;
  std::size_t steps_ = 0;
  double delta_ = 1.0;
  bool keep_paths_ = true;
  std::vector<Count> initial_;                     // J * V
  std::vector<std::vector<Count>> states_;         // per step, J * V
  std::vector<std::vector<std::uint32_t>> resampled_;  // per step, J ancestor indices
  std::vector<double> last_weights_;
  double log_likelihood_ = 0.0;
};

struct FilterOutput {
  ParticleEnsemble ensemble;
  /// log p^J(y | theta); -inf when degenerate.
  double log_marginal_likelihood = 0.0;
  bool degenerate = false;
  std::string degeneracy_reason;
  /// log((1/J) sum_j w_n^(j)*) for each assimilated step.
  std::vector<double> log_increments;
  /// Effective sample size 1 / sum w^2 at each step.
  std::vector<double> ess;
  /// Only filled with FilterOptions::record_weights.
  std::vector<std::vector<double>> step_log_weights;
};

/// log N(y; M x, sigma2 I).
double gaussian_log_likelihood(std::span<const double> y, std::span<const Count> x, const ObservationModel& model);

/// Bootstrap particle filter for log-rates theta (c = exp(theta)).
///
/// Particle j uses its own random stream derived from (seed, j), so results
/// are bit-identical whatever the thread count. Resampling is multinomial and
/// happens at every step, including the last.
FilterOutput run_filter(const ReactionNetwork& network, std::span<const double> theta, const PriorSpec& priors,
                        const ObservationSet& obs, std::size_t particles, std::uint64_t seed,
                        const FilterOptions& options = {});

/// Same, drawing the filter seed from rng.
FilterOutput run_filter(const ReactionNetwork& network, std::span<const double> theta, const PriorSpec& priors,
                        const ObservationSet& obs, std::size_t particles, Rng& rng,
                        const FilterOptions& options = {});

/// Draws one path with probability equal to its final normalized weight.
Trajectory sample_path(const FilterOutput& out, Rng& rng);

/// CSV of per-step diagnostics: n, ess, log_increment.
void write_filter_diagnostics_csv(std::ostream& os, const FilterOutput& out);

}  // namespace skm
