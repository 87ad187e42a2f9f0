#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "skm/gillespie.hpp"
#include "skm/network.hpp"
#include "skm/particle_filter.hpp"
#include "skm/random.hpp"

namespace skm {

struct LikelihoodEstimate {
  /// log of the (estimated) likelihood; -inf encodes a zero estimate.
  double log_likelihood = 0.0;
  /// A latent path drawn from the conditional posterior, when requested.
  std::optional<Trajectory> path;
};

/// Posterior over a parameter vector, as seen by the samplers: a prior they
/// can sample and evaluate, and a likelihood they can (noisily) estimate.
class SamplingTarget {
 public:
  virtual ~SamplingTarget() = default;
  virtual std::size_t dim() const = 0;
  virtual double log_prior(std::span<const double> theta) const = 0;
  virtual std::vector<double> sample_prior(Rng& rng) const = 0;
  /// Must be a pure function of (theta, seed, want_path).
  virtual LikelihoodEstimate estimate_likelihood(std::span<const double> theta, std::uint64_t seed,
                                                 bool want_path) const = 0;
};

/// Which log-rates are inferred. The rest stay pinned at `base`.
struct ParameterLayout {
  std::vector<double> base;
  std::vector<std::size_t> free;

  static ParameterLayout all(std::size_t K);
  static ParameterLayout single(std::vector<double> base, std::size_t index);

  std::vector<double> expand(std::span<const double> free_values) const;
  std::vector<double> restrict(std::span<const double> full) const;
};

/// Posterior of the free log-rates of a reaction network given observations,
/// with the likelihood estimated by the bootstrap particle filter.
class KineticModelTarget final : public SamplingTarget {
 public:
  KineticModelTarget(const ReactionNetwork& network, PriorSpec priors, const ObservationSet& obs,
                     ParameterLayout layout, std::size_t particles, FilterOptions filter = {});

  std::size_t dim() const override { return layout_.free.size(); }
  double log_prior(std::span<const double> theta) const override;
  std::vector<double> sample_prior(Rng& rng) const override;
  LikelihoodEstimate estimate_likelihood(std::span<const double> theta, std::uint64_t seed,
                                         bool want_path) const override;

  const ParameterLayout& layout() const { return layout_; }

 private:
  const ReactionNetwork& network_;
  PriorSpec priors_;
  PriorSpec free_priors_;
  const ObservationSet& obs_;
  ParameterLayout layout_;
  std::size_t particles_;
  FilterOptions filter_;
};

}  // namespace skm
