#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "skm/errors.hpp"
#include "skm/gillespie.hpp"
#include "support.hpp"

using namespace skm;

namespace {

ReactionNetwork pure_death() {
  IntMatrix pre(1, 1), post(1, 1);
  pre << 1;
  post << 0;
  return ReactionNetwork("death", {"A"}, {"decay"}, pre, post);
}

ReactionNetwork isomerization(Count total) {
  IntMatrix pre(2, 2), post(2, 2);
  pre << 1, 0, 0, 1;
  post << 0, 1, 1, 0;
  return ReactionNetwork("iso", {"A", "B"}, {"fwd", "back"}, pre, post, {ConservationLaw{{1, 1}, total}});
}

}  // namespace

TEST_SUITE("gillespie") {

TEST_CASE("pure death matches the binomial law") {
  const auto net = pure_death();
  const std::vector<double> c{0.5};
  Rng rng(2024);
  std::vector<double> finals;
  for (int r = 0; r < 4000; ++r) finals.push_back(static_cast<double>(simulate_interval(net, c, {1000}, 1.0, rng).state[0]));
  const double p = std::exp(-0.5);
  const double mean = 1000 * p, var = 1000 * p * (1 - p);  // 606.53, 238.7
  CHECK(testing::mean(finals) == doctest::Approx(mean).epsilon(4 * std::sqrt(var / 4000) / mean));
  CHECK(testing::variance(finals) == doctest::Approx(var).epsilon(0.1));
}

TEST_CASE("isomerization distribution matches the matrix exponential") {
  const Count total = 19;
  const auto net = isomerization(total);
  const std::vector<double> c{1.0, 0.5};
  // generator over the number of A molecules, 0..19
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(total + 1, total + 1);
  for (Count a = 0; a <= total; ++a) {
    if (a > 0) Q(a, a - 1) = c[0] * static_cast<double>(a);
    if (a < total) Q(a, a + 1) = c[1] * static_cast<double>(total - a);
    Q(a, a) = -Q.row(a).sum();
  }
  const Eigen::MatrixXd P = Q.exp();
  Rng rng(77);
  std::vector<double> hist(total + 1, 0.0);
  const int runs = 100000;
  for (int r = 0; r < runs; ++r) hist[simulate_interval(net, c, {total, 0}, 1.0, rng).state[0]] += 1.0 / runs;
  double tv = 0.0;
  for (Count a = 0; a <= total; ++a) tv += 0.5 * std::abs(hist[a] - P(total, a));
  CHECK(tv < 0.02);
}

TEST_CASE("prokaryotic trajectories conserve gene copies") {
  const auto net = build_prokaryotic();
  Rng rng(9);
  for (int r = 0; r < 50; ++r) {
    const auto traj = simulate_trajectory(net, prokaryotic::true_rates(), prokaryotic::initial_state(), 1.0, 100, rng);
    REQUIRE(traj.steps() == 100);
    for (const auto& x : traj.states) {
      CHECK(x[3] + x[4] == 10);
      for (Count v : x) CHECK(v >= 0);
    }
  }
}

TEST_CASE("same seed, same trajectory") {
  const auto net = build_prokaryotic();
  Rng a(5), b(5), c(6);
  const auto ta = simulate_trajectory(net, prokaryotic::true_rates(), prokaryotic::initial_state(), 1.0, 50, a);
  const auto tb = simulate_trajectory(net, prokaryotic::true_rates(), prokaryotic::initial_state(), 1.0, 50, b);
  const auto tc = simulate_trajectory(net, prokaryotic::true_rates(), prokaryotic::initial_state(), 1.0, 50, c);
  CHECK(ta.states == tb.states);
  CHECK(ta.event_count == tb.event_count);
  CHECK(ta.states != tc.states);
}

TEST_CASE("absorbing state stays put") {
  const auto net = pure_death();
  Rng rng(1);
  const auto r = simulate_interval(net, std::vector<double>{3.0}, {0}, 10.0, rng);
  CHECK(r.state[0] == 0);
  CHECK(r.events == 0);
}

TEST_CASE("event cap and non-finite hazards are errors") {
  const auto net = build_prokaryotic();
  Rng rng(1);
  auto c = prokaryotic::true_rates();
  CHECK_THROWS_AS(simulate_interval(net, c, prokaryotic::initial_state(), 10.0, rng, 5), EventCapExceeded);
  c[5] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(simulate_interval(net, c, prokaryotic::initial_state(), 1.0, rng), NonFiniteHazard);
  CHECK_THROWS_AS(simulate_trajectory(net, prokaryotic::true_rates(), prokaryotic::initial_state(), 1.0, 0, rng),
                  PreconditionError);
}

TEST_CASE("observations follow y = Mx + noise") {
  const auto net = build_prokaryotic();
  Rng rng(3);
  const auto traj = simulate_trajectory(net, prokaryotic::true_rates(), prokaryotic::initial_state(), 1.0, 2000, rng);
  const auto po = synthesize_observations(traj, prokaryotic::partial_observation(), rng);
  const auto exact = synthesize_observations(traj, prokaryotic::partial_observation(), rng, true);
  REQUIRE(po.y.rows() == 2000);
  REQUIRE(po.y.cols() == 1);
  std::vector<double> resid;
  for (Eigen::Index n = 0; n < 2000; ++n) {
    const auto& x = traj.states[static_cast<std::size_t>(n)];
    CHECK(exact.y(n, 0) == static_cast<double>(x[1] + 2 * x[2]));
    resid.push_back(po.y(n, 0) - exact.y(n, 0));
  }
  CHECK(std::abs(testing::mean(resid)) < 4 * std::sqrt(4.0 / 2000));
  CHECK(testing::variance(resid) == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("CSV round trip keeps every digit") {
  const auto net = build_prokaryotic();
  Rng rng(8);
  const auto traj = simulate_trajectory(net, prokaryotic::true_rates(), prokaryotic::initial_state(), 1.0, 20, rng);
  const auto obs = synthesize_observations(traj, prokaryotic::complete_observation(), rng);
  std::stringstream ts, os;
  write_trajectory_csv(ts, traj);
  write_observations_csv(os, obs);
  CHECK(ts.str().rfind("n,t,x_1,x_2,x_3,x_4,x_5\n", 0) == 0);
  CHECK(os.str().rfind("n,t,y_1,y_2,y_3,y_4,y_5\n", 0) == 0);
  CHECK(read_trajectory_csv(ts) == traj.states);
  CHECK(read_observations_csv(os) == obs.y);
}

}  // TEST_SUITE
