#include <doctest.h>

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

#include "skm/errors.hpp"
#include "skm/verify.hpp"

using namespace skm;
using namespace skm::verify;

namespace {

/// Forward recursion over the two hidden states with the transition matrix
/// from the matrix exponential of the generator.
double forward_likelihood(const TwoStateToy& toy, double theta) {
  Eigen::Matrix2d Q;
  const double a = std::exp(theta), b = std::exp(toy.log_back_rate);
  Q << -a, a, b, -b;
  const Eigen::Matrix2d P = (Q * toy.delta).exp();
  Eigen::RowVector2d alpha(0.5, 0.5);
  for (double y : toy.y) {
    alpha = alpha * P;
    for (int s = 0; s < 2; ++s) {
      const double r = y - (s == 0 ? 1.0 : 0.0);
      alpha(s) *= std::exp(-0.5 * r * r / toy.noise_variance) / std::sqrt(2 * M_PI * toy.noise_variance);
    }
  }
  return alpha.sum();
}

}  // namespace

TEST_SUITE("nis-verify") {

TEST_CASE("two-state likelihood agrees with the forward recursion") {
  for (std::size_t steps : {1, 3, 6}) {
    const auto toy = TwoStateToy::make(steps, 100 + steps);
    REQUIRE(toy.y.size() == steps);
    for (double theta : {-2.0, -0.3, 0.0, 1.1})
      CHECK(toy.exact_likelihood(theta) == doctest::Approx(forward_likelihood(toy, theta)).epsilon(1e-12));
  }
  CHECK(TwoStateToy::make(0, 1).exact_likelihood(0.4) == 1.0);
}

TEST_CASE("toy network keeps one molecule") {
  const auto toy = TwoStateToy::make(50, 3);
  for (double y : toy.y) CHECK(std::isfinite(y));
  const auto net = toy.network();
  CHECK(net.species_count() == 2);
  CHECK(net.satisfies_conservation(StateVector{1, 0}));
  CHECK(!net.satisfies_conservation(StateVector{1, 1}));
}

TEST_CASE("clipping bound holds on random admissible inputs") {
  const auto s = clipping_bound_sweep(300, 100, 10, 10.0, 1);
  CHECK(s.failures == 0);
  CHECK(s.worst_ratio <= 1.0);
  CHECK(s.worst_ratio > 0.0);
}

TEST_CASE("clipping bound rejects weights outside the box") {
  const std::vector<double> f{0.1, 0.2, 0.3};
  const std::vector<double> w{1.0, 20.0, 1.0};
  CHECK_THROWS_AS(check_clipping_bound(f, w, 2, 10.0), PreconditionError);
  const std::vector<double> ok{1.0, 2.0, 0.5};
  const auto r = check_clipping_bound(f, ok, 2, 10.0);
  CHECK(r.pass);
  CHECK(r.rhs == doctest::Approx(2 * 100 * 0.3 * 2 / 3.0));
}

TEST_CASE("log-log slope") {
  const std::vector<std::size_t> n{10, 100, 1000, 10000};
  std::vector<double> e;
  for (auto v : n) e.push_back(3.0 / std::sqrt(static_cast<double>(v)));
  CHECK(loglog_slope(n, e) == doctest::Approx(-0.5));
}

TEST_CASE("importance sampling error decays at the square-root rate") {
  RateCheckConfig cfg;
  cfg.grid = {100, 400, 1600};
  cfg.replicates = 60;
  const auto r = check_is_rate(cfg);
  CHECK(r.plain.pass);
  CHECK(r.clipped.pass);
  CHECK(r.limit_pass);
  CHECK(r.truth > 0.5);
  CHECK(r.truth < 1.0);
  const auto j = to_json(r);
  CHECK(j.at("plain").at("mean_abs_error").size() == 3);
}

TEST_CASE("rate check preconditions") {
  RateCheckConfig cfg;
  cfg.a = 1.5;  // the weight function spans far more than [1/1.5, 1.5]
  CHECK_THROWS_AS(check_is_rate(cfg), PreconditionError);
  RateCheckConfig small;
  small.replicates = 10;
  CHECK_THROWS_AS(check_is_rate(small), ConfigError);
  RateCheckConfig short_grid;
  short_grid.grid = {100, 1000};
  CHECK_THROWS_AS(check_is_rate(short_grid), ConfigError);
}

TEST_CASE("particle filter likelihood error decays at the square-root rate") {
  PfRateConfig cfg;
  cfg.particle_grid = {25, 100, 400};
  cfg.replicates = 60;
  cfg.theta_grid = {-1.0, 0.0, 1.0};
  const auto r = check_pf_likelihood_rate(cfg);
  CHECK(r.pass);
  CHECK(r.mean_abs_error[0] > r.mean_abs_error[2]);
}

TEST_CASE("no observations means nothing to estimate") {
  PfRateConfig cfg;
  cfg.toy = TwoStateToy::make(0, 1);
  const auto r = check_pf_likelihood_rate(cfg);
  CHECK(r.pass);
  for (double e : r.mean_abs_error) CHECK(e == 0.0);
}

}  // TEST_SUITE
