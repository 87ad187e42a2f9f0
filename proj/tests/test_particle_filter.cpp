#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <tbb/global_control.h>
#include <tbb/task_arena.h>

#include "skm/errors.hpp"
#include "skm/particle_filter.hpp"
#include "skm/verify.hpp"
#include "support.hpp"

using namespace skm;

namespace {

struct Fixture {
  ReactionNetwork net = build_prokaryotic();
  PriorSpec priors = prokaryotic::default_priors();
  std::vector<double> theta;
  ObservationSet co, po;

  explicit Fixture(std::size_t steps = 20) {
    for (double c : prokaryotic::true_rates()) theta.push_back(std::log(c));
    Rng rng(42);
    const auto traj = simulate_trajectory(net, prokaryotic::true_rates(), prokaryotic::initial_state(), 1.0, steps, rng);
    co = synthesize_observations(traj, prokaryotic::complete_observation(), rng);
    po = synthesize_observations(traj, prokaryotic::partial_observation(), rng);
  }
};

std::vector<double> row(const Eigen::MatrixXd& y, Eigen::Index n) {
  std::vector<double> out(static_cast<std::size_t>(y.cols()));
  for (Eigen::Index d = 0; d < y.cols(); ++d) out[static_cast<std::size_t>(d)] = y(n, d);
  return out;
}

}  // namespace

TEST_SUITE("smc-filter") {

TEST_CASE("Gaussian observation density") {
  ObservationModel m{Eigen::MatrixXd::Ones(1, 1), 4.0};
  const std::vector<double> y{0.0};
  const std::vector<Count> x{2};
  CHECK(gaussian_log_likelihood(y, x, m) == doctest::Approx(-0.5 * std::log(8 * M_PI) - 0.5).epsilon(1e-14));
}

TEST_CASE("one particle gives the likelihood of its own path") {
  Fixture f;
  const auto out = run_filter(f.net, f.theta, f.priors, f.co, 1, 123);
  REQUIRE(!out.degenerate);
  const auto path = out.ensemble.path(0);
  REQUIRE(path.steps() == f.co.steps());
  double ll = 0.0;
  for (std::size_t n = 0; n < path.steps(); ++n)
    ll += gaussian_log_likelihood(row(f.co.y, static_cast<Eigen::Index>(n)), path.states[n], f.co.model);
  CHECK(out.log_marginal_likelihood == doctest::Approx(ll).epsilon(1e-12));
}

TEST_CASE("likelihood is rebuilt from the recorded weights") {
  Fixture f;
  FilterOptions opt;
  opt.record_weights = true;
  const auto out = run_filter(f.net, f.theta, f.priors, f.po, 64, 5, opt);
  REQUIRE(out.step_log_weights.size() == f.po.steps());
  double total = 0.0;
  for (std::size_t n = 0; n < out.step_log_weights.size(); ++n) {
    const auto& lw = out.step_log_weights[n];
    double m = -std::numeric_limits<double>::infinity();
    for (double v : lw) m = std::max(m, v);
    double s = 0.0;
    for (double v : lw) s += std::exp(v - m);
    const double inc = m + std::log(s / static_cast<double>(lw.size()));
    CHECK(out.log_increments[n] == doctest::Approx(inc).epsilon(1e-12));
    CHECK(out.ess[n] >= 1.0 - 1e-9);
    CHECK(out.ess[n] <= 64.0 + 1e-9);
    total += inc;
  }
  CHECK(out.log_marginal_likelihood == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("likelihood estimate is unbiased on the two-state toy") {
  const auto toy = verify::TwoStateToy::make(4, 11);
  const auto net = toy.network();
  const auto priors = toy.priors();
  const auto obs = toy.observations();
  FilterOptions opt;
  opt.keep_paths = false;
  for (double theta : {-0.5, 0.7}) {
    const double exact = toy.exact_likelihood(theta);
    std::vector<double> est;
    for (std::uint64_t r = 0; r < 4000; ++r)
      est.push_back(std::exp(run_filter(net, toy.full_theta(theta), priors, obs, 10, r, opt).log_marginal_likelihood));
    const double se = std::sqrt(testing::variance(est) / est.size());
    CHECK(std::abs(testing::mean(est) - exact) < 4 * se);
  }
}

TEST_CASE("results do not depend on threads") {
  Fixture f(15);
  FilterOptions serial, parallel;
  parallel.parallel = true;
  const auto a = run_filter(f.net, f.theta, f.priors, f.co, 200, 99, serial);
  FilterOutput b, c;
  {
    tbb::global_control gc(tbb::global_control::max_allowed_parallelism, 4);
    tbb::task_arena arena(4);
    arena.execute([&] { b = run_filter(f.net, f.theta, f.priors, f.co, 200, 99, parallel); });
  }
  {
    tbb::global_control gc(tbb::global_control::max_allowed_parallelism, 1);
    c = run_filter(f.net, f.theta, f.priors, f.co, 200, 99, parallel);
  }
  CHECK(a.log_marginal_likelihood == b.log_marginal_likelihood);
  CHECK(a.log_marginal_likelihood == c.log_marginal_likelihood);
  CHECK(a.log_increments == b.log_increments);
  for (std::size_t j = 0; j < 200; j += 37) CHECK(a.ensemble.path(j).states == b.ensemble.path(j).states);
}

TEST_CASE("seed determines the estimate") {
  Fixture f(10);
  const auto a = run_filter(f.net, f.theta, f.priors, f.po, 50, 7);
  const auto b = run_filter(f.net, f.theta, f.priors, f.po, 50, 7);
  const auto c = run_filter(f.net, f.theta, f.priors, f.po, 50, 8);
  CHECK(a.log_marginal_likelihood == b.log_marginal_likelihood);
  CHECK(a.log_marginal_likelihood != c.log_marginal_likelihood);
}

TEST_CASE("paths are conserved and ancestry is consistent") {
  Fixture f(20);
  const auto out = run_filter(f.net, f.theta, f.priors, f.co, 100, 3);
  for (std::size_t j = 0; j < 100; ++j) {
    const auto p = out.ensemble.path(j);
    CHECK(p.x0.size() == 5);
    // independent Poisson priors on x0 give each particle its own gene total,
    // which the dynamics then conserve
    for (const auto& x : p.states) CHECK(x[3] + x[4] == p.x0[3] + p.x0[4]);
  }
  double s = 0.0;
  for (double w : out.ensemble.last_weights()) s += w;
  CHECK(s == doctest::Approx(1.0));
}

TEST_CASE("sampled paths follow the final weights") {
  Fixture f(5);
  const auto out = run_filter(f.net, f.theta, f.priors, f.po, 40, 17);
  // group particles by their whole path, since several can share one
  std::map<std::vector<StateVector>, double> expected;
  for (std::size_t j = 0; j < 40; ++j) expected[out.ensemble.path(j).states] += out.ensemble.last_weights()[j];
  std::map<std::vector<StateVector>, double> seen;
  Rng rng(4);
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) seen[sample_path(out, rng).states] += 1.0;
  double chi2 = 0.0;
  std::size_t cells = 0;
  for (const auto& [path, p] : expected) {
    if (p <= 0.0) continue;
    const double e = p * draws;
    const double o = seen.count(path) ? seen.at(path) : 0.0;
    chi2 += (o - e) * (o - e) / e;
    ++cells;
  }
  for (const auto& [path, o] : seen) CHECK(expected.count(path) == 1);
  // 99.9% point of chi-square with up to 39 degrees of freedom is below 73
  CHECK(chi2 < 73.0);
  CHECK(cells >= 2);
}

TEST_CASE("event cap degrades to a zero likelihood") {
  Fixture f(5);
  FilterOptions opt;
  opt.event_cap = 3;
  const auto out = run_filter(f.net, f.theta, f.priors, f.co, 20, 1, opt);
  CHECK(out.degenerate);
  CHECK(out.log_marginal_likelihood == -std::numeric_limits<double>::infinity());
  CHECK(!out.degeneracy_reason.empty());
  Rng rng(1);
  CHECK_THROWS_AS(sample_path(out, rng), DegeneratePopulation);
}

TEST_CASE("input validation") {
  Fixture f(5);
  CHECK_THROWS_AS(run_filter(f.net, f.theta, f.priors, f.co, 0, 1), PreconditionError);
  std::vector<double> short_theta(3, 0.0);
  CHECK_THROWS_AS(run_filter(f.net, short_theta, f.priors, f.co, 10, 1), DimensionMismatch);
}

TEST_CASE("diagnostics CSV") {
  Fixture f(4);
  const auto out = run_filter(f.net, f.theta, f.priors, f.co, 10, 1);
  std::stringstream ss;
  write_filter_diagnostics_csv(ss, out);
  std::string line;
  std::getline(ss, line);
  CHECK(line == "n,ess,log_increment");
  int rows = 0;
  while (std::getline(ss, line)) ++rows;
  CHECK(rows == 4);
}

}  // TEST_SUITE
