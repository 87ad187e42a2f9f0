#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "skm/network.hpp"
#include "skm/random.hpp"

namespace skm {

inline constexpr std::uint64_t kDefaultEventCap = 10'000'000;

/// Latent populations on the grid t = n * delta, n = 1..N, plus the initial state.
struct Trajectory {
  StateVector x0;
  std::vector<StateVector> states;
  double delta = 1.0;
  std::uint64_t event_count = 0;

  std::size_t steps() const { return states.size(); }
};

/// Noisy observations y_1..y_N (rows of y), one per grid point. There is no
/// observation at t = 0.
struct ObservationSet {
  Eigen::MatrixXd y;  // N x D
  ObservationModel model;
  double delta = 1.0;

  std::size_t steps() const { return static_cast<std::size_t>(y.rows()); }
};

struct IntervalResult {
  StateVector state;
  std::uint64_t events = 0;
};

/// Advances x in place by `duration` time units with the direct method.
/// `scratch` must hold K doubles. Returns the number of reactions fired.
std::uint64_t advance_state(const ReactionNetwork& network, std::span<const double> c, std::span<Count> x,
                            double duration, Rng& rng, std::span<double> scratch,
                            std::uint64_t event_cap = kDefaultEventCap);

IntervalResult simulate_interval(const ReactionNetwork& network, std::span<const double> c, StateVector state,
                                 double duration, Rng& rng, std::uint64_t event_cap = kDefaultEventCap);

Trajectory simulate_trajectory(const ReactionNetwork& network, std::span<const double> c, StateVector x0,
                               double delta, std::size_t steps, Rng& rng,
                               std::uint64_t event_cap = kDefaultEventCap);

/// y_n = M x_n + w_n. With `noiseless` set, w_n = 0 (test hook).
ObservationSet synthesize_observations(const Trajectory& traj, const ObservationModel& model, Rng& rng,
                                       bool noiseless = false);

// CSV: one row per n with columns n,t,x_1..x_V (or y_1..y_D).
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
void write_observations_csv(std::ostream& os, const ObservationSet& obs);
/// Reads rows written by write_trajectory_csv; x0 and delta are not in the CSV.
std::vector<StateVector> read_trajectory_csv(std::istream& is);
Eigen::MatrixXd read_observations_csv(std::istream& is);

/// Replication envelope: delta, seed, model identity and the initial state.
nlohmann::json trajectory_envelope(const Trajectory& traj, const ReactionNetwork& network, std::uint64_t seed);
nlohmann::json observation_envelope(const ObservationSet& obs, const ReactionNetwork& network, std::uint64_t seed);

}  // namespace skm
