#include "skm/gillespie.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "skm/errors.hpp"

namespace skm {

namespace {

constexpr std::size_t kMaxInlineReactions = 32;

std::uint64_t advance_state_generic(const ReactionNetwork& network, std::span<const double> c, std::span<Count> x,
                                    double duration, Rng& rng, std::span<double> scratch, std::uint64_t event_cap) {
  const std::size_t K = network.reaction_count();
  std::uint64_t events = 0;
  double elapsed = 0.0;
  while (true) {
    const double h0 = network.fill_hazards(x, c, scratch);
    if (!std::isfinite(h0)) throw NonFiniteHazard("non-finite total hazard; check rate constants");
    if (h0 <= 0.0) return events;
    elapsed += rng.exponential(h0);
    if (elapsed > duration) return events;
    if (++events > event_cap) throw EventCapExceeded("more than " + std::to_string(event_cap) + " events in one interval");
    double target = rng.uniform() * h0;
    std::size_t k = 0;
    for (; k + 1 < K; ++k) {
      target -= scratch[k];
      if (target < 0.0) break;
    }
    while (scratch[k] <= 0.0) --k;
    network.fire(x, k);
  }
}

}  // namespace

std::uint64_t advance_state(const ReactionNetwork& network, std::span<const double> c, std::span<Count> x,
                            double duration, Rng& rng, std::span<double> scratch, std::uint64_t event_cap) {
  const std::size_t K = network.reaction_count();
  if (K > kMaxInlineReactions) return advance_state_generic(network, c, x, duration, rng, scratch, event_cap);
  std::array<double, kMaxInlineReactions> cum;
  std::uint64_t events = 0;
  double elapsed = 0.0;
  network.fill_hazards(x, c, scratch);
  while (true) {
    double acc = 0.0;
    for (std::size_t j = 0; j < K; ++j) cum[j] = (acc += scratch[j]);
    const double h0 = acc;
    if (!std::isfinite(h0)) throw NonFiniteHazard("non-finite total hazard; check rate constants");
    if (h0 <= 0.0) return events;  // absorbing until the interval ends
    elapsed += rng.exponential(h0);
    if (elapsed > duration) return events;
    if (++events > event_cap) throw EventCapExceeded("more than " + std::to_string(event_cap) + " events in one interval");
    // first k with target < cum[k]; counting avoids unpredictable branches
    const double target = rng.uniform() * h0;
    std::size_t k = 0;
    for (std::size_t j = 0; j + 1 < K; ++j) k += cum[j] <= target;
    // rounding can leave target >= h0 - h_K; fall back to the last reaction
    // with positive hazard
    while (scratch[k] <= 0.0) --k;
    network.fire(x, k);
    for (std::uint32_t j : network.dependents(k)) scratch[j] = network.hazard(j, x, c);
  }
}

IntervalResult simulate_interval(const ReactionNetwork& network, std::span<const double> c, StateVector state,
                                 double duration, Rng& rng, std::uint64_t event_cap) {
  if (state.size() != network.species_count()) throw DimensionMismatch("state length != species count");
  if (c.size() != network.reaction_count()) throw DimensionMismatch("rate vector length != reaction count");
  if (!(duration >= 0.0)) throw PreconditionError("duration must be >= 0");
  std::vector<double> scratch(network.reaction_count());
  IntervalResult out;
  out.events = advance_state(network, c, state, duration, rng, scratch, event_cap);
  out.state = std::move(state);
  return out;
}

Trajectory simulate_trajectory(const ReactionNetwork& network, std::span<const double> c, StateVector x0,
                               double delta, std::size_t steps, Rng& rng, std::uint64_t event_cap) {
  if (steps < 1) throw PreconditionError("trajectory needs N >= 1");
  if (!(delta > 0.0)) throw PreconditionError("delta must be positive");
  if (x0.size() != network.species_count()) throw DimensionMismatch("x0 length != species count");
  if (c.size() != network.reaction_count()) throw DimensionMismatch("rate vector length != reaction count");
  Trajectory traj;
  traj.delta = delta;
  traj.x0 = x0;
  traj.states.reserve(steps);
  std::vector<double> scratch(network.reaction_count());
  StateVector x = std::move(x0);
  for (std::size_t n = 0; n < steps; ++n) {
    traj.event_count += advance_state(network, c, x, delta, rng, scratch, event_cap);
    traj.states.push_back(x);
  }
  return traj;
}

ObservationSet synthesize_observations(const Trajectory& traj, const ObservationModel& model, Rng& rng,
                                       bool noiseless) {
  if (traj.states.empty()) throw PreconditionError("empty trajectory");
  model.validate(traj.states.front().size());
  const auto D = model.matrix.rows();
  const auto V = model.matrix.cols();
  const double sd = std::sqrt(model.noise_variance);
  ObservationSet obs;
  obs.model = model;
  obs.delta = traj.delta;
  obs.y.resize(static_cast<Eigen::Index>(traj.states.size()), D);
  Eigen::VectorXd x(V);
  for (std::size_t n = 0; n < traj.states.size(); ++n) {
    for (Eigen::Index v = 0; v < V; ++v) x(v) = static_cast<double>(traj.states[n][static_cast<std::size_t>(v)]);
    Eigen::VectorXd y = model.matrix * x;
    if (!noiseless)
      for (Eigen::Index d = 0; d < D; ++d) y(d) += sd * rng.normal();
    obs.y.row(static_cast<Eigen::Index>(n)) = y.transpose();
  }
  return obs;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const std::size_t V = traj.x0.size();
  os << "n,t";
  for (std::size_t v = 1; v <= V; ++v) os << ",x_" << v;
  os << '\n';
  for (std::size_t n = 0; n < traj.states.size(); ++n) {
    os << n + 1 << ',' << std::setprecision(17) << static_cast<double>(n + 1) * traj.delta;
    for (Count xv : traj.states[n]) os << ',' << xv;
    os << '\n';
  }
}

void write_observations_csv(std::ostream& os, const ObservationSet& obs) {
  os << "n,t";
  for (Eigen::Index d = 1; d <= obs.y.cols(); ++d) os << ",y_" << d;
  os << '\n';
  os << std::setprecision(17);
  for (Eigen::Index n = 0; n < obs.y.rows(); ++n) {
    os << n + 1 << ',' << static_cast<double>(n + 1) * obs.delta;
    for (Eigen::Index d = 0; d < obs.y.cols(); ++d) os << ',' << obs.y(n, d);
    os << '\n';
  }
}

namespace {

std::vector<std::vector<std::string>> read_csv_body(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("empty CSV");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!rows.empty() && cells.size() != rows.front().size()) throw Error("ragged CSV row");
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

std::vector<StateVector> read_trajectory_csv(std::istream& is) {
  std::vector<StateVector> states;
  for (const auto& row : read_csv_body(is)) {
    StateVector x;
    for (std::size_t i = 2; i < row.size(); ++i) x.push_back(std::stoll(row[i]));
    states.push_back(std::move(x));
  }
  return states;
}

Eigen::MatrixXd read_observations_csv(std::istream& is) {
  const auto rows = read_csv_body(is);
  if (rows.empty()) return {};
  Eigen::MatrixXd y(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size() - 2));
  for (std::size_t n = 0; n < rows.size(); ++n)
    for (std::size_t d = 2; d < rows[n].size(); ++d)
      y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d - 2)) = std::stod(rows[n][d]);
  return y;
}

nlohmann::json trajectory_envelope(const Trajectory& traj, const ReactionNetwork& network, std::uint64_t seed) {
  return {{"schema_version", 1}, {"kind", "trajectory"},     {"model", network.name()},
          {"species", network.species_names()},               {"delta", traj.delta},
          {"N", traj.steps()},     {"seed", seed},            {"x0", traj.x0},
          {"event_count", traj.event_count}};
}

nlohmann::json observation_envelope(const ObservationSet& obs, const ReactionNetwork& network, std::uint64_t seed) {
  std::vector<std::vector<double>> m;
  for (Eigen::Index r = 0; r < obs.model.matrix.rows(); ++r) {
    m.emplace_back();
    for (Eigen::Index c = 0; c < obs.model.matrix.cols(); ++c) m.back().push_back(obs.model.matrix(r, c));
  }
  return {{"schema_version", 1}, {"kind", "observations"}, {"model", network.name()},
          {"delta", obs.delta},  {"N", obs.steps()},         {"seed", seed},
          {"obs_matrix", m},     {"noise_variance", obs.model.noise_variance}};
}

}  // namespace skm
