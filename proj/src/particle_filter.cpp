#include "skm/particle_filter.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>

#include "skm/errors.hpp"
#include "skm/resampling.hpp"

namespace skm {

namespace {

constexpr std::uint64_t kResampleStream = 0x7265'7361'6d70'6c65ULL;

/// Observation density pieces precomputed once per filter run.
struct GaussianObs {
  std::size_t dim;
  std::size_t species;
  std::vector<double> m;  // row-major D x V
  double log_norm;
  double inv_two_var;

  explicit GaussianObs(const ObservationModel& model)
      : dim(model.dim()),
        species(static_cast<std::size_t>(model.matrix.cols())),
        m(dim * species),
        log_norm(-0.5 * static_cast<double>(model.dim()) * std::log(2.0 * std::numbers::pi * model.noise_variance)),
        inv_two_var(0.5 / model.noise_variance) {
    for (std::size_t d = 0; d < dim; ++d)
      for (std::size_t v = 0; v < species; ++v)
        m[d * species + v] = model.matrix(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(v));
  }

  double log_density(const double* y, const Count* x) const {
    double ss = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      double mean = 0.0;
      const double* row = &m[d * species];
      for (std::size_t v = 0; v < species; ++v) mean += row[v] * static_cast<double>(x[v]);
      const double r = y[d] - mean;
      ss += r * r;
    }
    return log_norm - ss * inv_two_var;
  }
};

}  // namespace

double gaussian_log_likelihood(std::span<const double> y, std::span<const Count> x, const ObservationModel& model) {
  if (y.size() != model.dim() || x.size() != static_cast<std::size_t>(model.matrix.cols()))
    throw DimensionMismatch("observation/state dimensions do not match the observation model");
  return GaussianObs(model).log_density(y.data(), x.data());
}

Trajectory ParticleEnsemble::path(std::size_t j) const {
  if (!keep_paths_) throw PreconditionError("particle paths were not recorded");
  if (j >= particles_) throw PreconditionError("particle index out of range");
  Trajectory t;
  t.delta = delta_;
  t.states.resize(steps_);
  std::size_t idx = j;
  for (std::size_t n = steps_; n-- > 0;) {
    const Count* x = &states_[n][idx * species_];
    t.states[n].assign(x, x + species_);
    if (n > 0) idx = resampled_[n - 1][idx];
  }
  const Count* x0 = &initial_[idx * species_];
  t.x0.assign(x0, x0 + species_);
  return t;
}

/// Runs the recursion and fills the ensemble; friend of ParticleEnsemble.
class FilterRun {
 public:
  static FilterOutput run(const ReactionNetwork& network, std::span<const double> theta, const PriorSpec& priors,
                          const ObservationSet& obs, std::size_t J, std::uint64_t seed, const FilterOptions& opt) {
    const std::size_t V = network.species_count();
    const std::size_t K = network.reaction_count();
    if (J < 1) throw PreconditionError("particle filter needs J >= 1");
    if (theta.size() != K) throw DimensionMismatch("theta length != reaction count");
    if (obs.steps() < 1) throw PreconditionError("particle filter needs at least one observation");
    obs.model.validate(V);
    if (static_cast<std::size_t>(obs.y.cols()) != obs.model.dim())
      throw DimensionMismatch("observation rows do not match the observation model");

    std::vector<double> c(K);
    for (std::size_t k = 0; k < K; ++k) c[k] = std::exp(theta[k]);
    const GaussianObs density(obs.model);
    const std::size_t N = obs.steps();
    const std::size_t D = obs.model.dim();

    FilterOutput out;
    ParticleEnsemble& ens = out.ensemble;
    ens.particles_ = J;
    ens.species_ = V;
    ens.delta_ = obs.delta;
    ens.keep_paths_ = opt.keep_paths;

    std::vector<Rng> streams;
    streams.reserve(J);
    for (std::size_t j = 0; j < J; ++j) streams.emplace_back(derive_seed(seed, {j}));
    Rng resample_rng(derive_seed(seed, {kResampleStream}));

    std::vector<Count> current(J * V);
    for (std::size_t j = 0; j < J; ++j) {
      const StateVector x0 = sample_initial_state(priors, streams[j]);
      if (x0.size() != V) throw DimensionMismatch("initial-state prior length != species count");
      std::copy(x0.begin(), x0.end(), current.begin() + static_cast<std::ptrdiff_t>(j * V));
    }
    if (opt.keep_paths) ens.initial_ = current;

    std::vector<double> log_w(J), w(J);
    std::vector<Count> proposed(J * V);
    // row-major copy of y so the density reads contiguous memory
    std::vector<double> y(N * D);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t d = 0; d < D; ++d) y[n * D + d] = obs.y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));

    double log_ml = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      proposed = current;
      std::atomic<bool> capped{false};
      auto propagate = [&](std::size_t begin, std::size_t end) {
        std::vector<double> scratch(K);
        for (std::size_t j = begin; j < end; ++j) {
          if (capped.load(std::memory_order_relaxed)) return;
          std::span<Count> x(&proposed[j * V], V);
          try {
            advance_state(network, c, x, obs.delta, streams[j], scratch, opt.event_cap);
          } catch (const EventCapExceeded&) {
            capped.store(true, std::memory_order_relaxed);
            return;
          }
          log_w[j] = density.log_density(&y[n * D], x.data());
        }
      };
      if (opt.parallel) {
        tbb::parallel_for(tbb::blocked_range<std::size_t>(0, J),
                          [&](const tbb::blocked_range<std::size_t>& r) { propagate(r.begin(), r.end()); });
      } else {
        propagate(0, J);
      }
      if (capped.load()) {
        out.degenerate = true;
        out.degeneracy_reason = "event cap exceeded at step " + std::to_string(n + 1);
        break;
      }
      if (opt.keep_paths) ens.states_.push_back(proposed);
      if (opt.record_weights) out.step_log_weights.push_back(log_w);

      const double inc = normalize_log_weights(log_w, w);
      if (!(inc > -std::numeric_limits<double>::infinity())) {
        out.degenerate = true;
        out.degeneracy_reason = "all weights zero at step " + std::to_string(n + 1);
        ens.steps_ = n + 1;
        break;
      }
      log_ml += inc;
      out.log_increments.push_back(inc);
      double sum_sq = 0.0;
      for (double wj : w) sum_sq += wj * wj;
      out.ess.push_back(1.0 / sum_sq);
      ens.steps_ = n + 1;

      const auto idx = multinomial_indices(w, J, resample_rng);
      for (std::size_t j = 0; j < J; ++j)
        std::copy_n(&proposed[idx[j] * V], V, &current[j * V]);
      if (opt.keep_paths) ens.resampled_.emplace_back(idx.begin(), idx.end());
    }

    if (out.degenerate) {
      out.log_marginal_likelihood = -std::numeric_limits<double>::infinity();
      ens.last_weights_.assign(J, 0.0);
    } else {
      out.log_marginal_likelihood = log_ml;
      ens.last_weights_ = w;
    }
    ens.log_likelihood_ = out.log_marginal_likelihood;
    return out;
  }
};

FilterOutput run_filter(const ReactionNetwork& network, std::span<const double> theta, const PriorSpec& priors,
                        const ObservationSet& obs, std::size_t particles, std::uint64_t seed,
                        const FilterOptions& options) {
  return FilterRun::run(network, theta, priors, obs, particles, seed, options);
}

FilterOutput run_filter(const ReactionNetwork& network, std::span<const double> theta, const PriorSpec& priors,
                        const ObservationSet& obs, std::size_t particles, Rng& rng, const FilterOptions& options) {
  return FilterRun::run(network, theta, priors, obs, particles, rng.next_u64(), options);
}

Trajectory sample_path(const FilterOutput& out, Rng& rng) {
  if (out.degenerate) throw DegeneratePopulation("cannot sample a path from a degenerate filter");
  const auto w = out.ensemble.last_weights();
  const auto pick = multinomial_indices(w, 1, rng);
  return out.ensemble.path(pick.front());
}

void write_filter_diagnostics_csv(std::ostream& os, const FilterOutput& out) {
  os << "n,ess,log_increment\n";
  os.precision(17);
  for (std::size_t n = 0; n < out.log_increments.size(); ++n)
    os << n + 1 << ',' << out.ess[n] << ',' << out.log_increments[n] << '\n';
}

}  // namespace skm
