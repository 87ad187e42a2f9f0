#include "skm/sampling_target.hpp"

#include <numeric>

#include "skm/errors.hpp"

namespace skm {

ParameterLayout ParameterLayout::all(std::size_t K) {
  ParameterLayout l;
  l.base.assign(K, 0.0);
  l.free.resize(K);
  std::iota(l.free.begin(), l.free.end(), std::size_t{0});
  return l;
}

ParameterLayout ParameterLayout::single(std::vector<double> base, std::size_t index) {
  if (index >= base.size()) throw ConfigError("parameter index out of range");
  ParameterLayout l;
  l.base = std::move(base);
  l.free = {index};
  return l;
}

std::vector<double> ParameterLayout::expand(std::span<const double> free_values) const {
  if (free_values.size() != free.size()) throw DimensionMismatch("free parameter count mismatch");
  std::vector<double> full = base;
  for (std::size_t i = 0; i < free.size(); ++i) full[free[i]] = free_values[i];
  return full;
}

std::vector<double> ParameterLayout::restrict(std::span<const double> full) const {
  std::vector<double> out(free.size());
  for (std::size_t i = 0; i < free.size(); ++i) out[i] = full[free[i]];
  return out;
}

KineticModelTarget::KineticModelTarget(const ReactionNetwork& network, PriorSpec priors, const ObservationSet& obs,
                                       ParameterLayout layout, std::size_t particles, FilterOptions filter)
    : network_(network),
      priors_(std::move(priors)),
      obs_(obs),
      layout_(std::move(layout)),
      particles_(particles),
      filter_(filter) {
  priors_.validate();
  if (priors_.theta_bounds.size() != network.reaction_count())
    throw DimensionMismatch("prior must have one bound pair per reaction");
  if (layout_.base.size() != network.reaction_count()) throw DimensionMismatch("layout base length != K");
  if (layout_.free.empty()) throw ConfigError("no free parameters to infer");
  free_priors_.x0_prior = priors_.x0_prior;
  for (std::size_t k : layout_.free) {
    if (k >= network.reaction_count()) throw ConfigError("free parameter index out of range");
    free_priors_.theta_bounds.push_back(priors_.theta_bounds[k]);
  }
  if (particles_ < 1) throw ConfigError("particle count must be >= 1");
}

double KineticModelTarget::log_prior(std::span<const double> theta) const {
  return log_prior_theta(free_priors_, theta);
}

std::vector<double> KineticModelTarget::sample_prior(Rng& rng) const {
  return sample_theta_prior(free_priors_, rng);
}

LikelihoodEstimate KineticModelTarget::estimate_likelihood(std::span<const double> theta, std::uint64_t seed,
                                                           bool want_path) const {
  const auto full = layout_.expand(theta);
  FilterOptions opt = filter_;
  opt.keep_paths = want_path;
  const FilterOutput out = run_filter(network_, full, priors_, obs_, particles_, seed, opt);
  LikelihoodEstimate est;
  est.log_likelihood = out.log_marginal_likelihood;
  if (want_path && !out.degenerate) {
    Rng path_rng(derive_seed(seed, {0x70617468ULL}));
    est.path = sample_path(out, path_rng);
  }
  return est;
}

}  // namespace skm
