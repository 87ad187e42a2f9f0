#include <doctest.h>

#include <cmath>
#include <limits>

#include "skm/errors.hpp"
#include "skm/network.hpp"

using namespace skm;

TEST_SUITE("skm-core") {

TEST_CASE("prokaryotic hazards at the reference state") {
  const auto net = build_prokaryotic();
  const auto h = hazards(net, prokaryotic::initial_state(), prokaryotic::true_rates());
  const std::vector<double> want{4.0, 3.5, 1.75, 1.6, 2.8, 7.2, 2.4, 0.8};
  REQUIRE(h.h.size() == 8);
  for (std::size_t k = 0; k < 8; ++k) CHECK(h.h[k] == doctest::Approx(want[k]).epsilon(1e-14));
  CHECK(h.h0 == doctest::Approx(24.05).epsilon(1e-14));
}

TEST_CASE("binding reaction moves P2 onto the gene") {
  const auto net = build_prokaryotic();
  const auto x = apply_reaction(prokaryotic::initial_state(), net, 0);
  CHECK(x == StateVector{8, 8, 7, 6, 4});
  CHECK(net.satisfies_conservation(x));
}

TEST_CASE("infeasible reaction is rejected") {
  const auto net = build_prokaryotic();
  const StateVector x{0, 1, 0, 0, 10};
  CHECK_THROWS_AS(apply_reaction(x, net, 4), InvalidTransition);  // 2P -> P2 with one P
  CHECK_THROWS_AS(apply_reaction(x, net, 6), InvalidTransition);  // RNA decay with no RNA
  CHECK_THROWS_AS(apply_reaction(x, net, 8), Error);
}

TEST_CASE("stoichiometry is the transposed net change") {
  const auto net = build_prokaryotic();
  const IntMatrix s = (net.products() - net.reactants()).transpose();
  CHECK(net.stoichiometry() == s);
  CHECK(net.species_count() == 5);
  CHECK(net.reaction_count() == 8);
  REQUIRE(net.conservation_laws().size() == 1);
  CHECK(net.conservation_laws()[0].total == 10);
}

TEST_CASE("hazards vanish exactly when reactants are short") {
  const auto net = build_prokaryotic();
  Rng rng(11);
  std::vector<double> c(8);
  for (int trial = 0; trial < 2000; ++trial) {
    for (auto& v : c) v = std::exp(rng.uniform(-7.0, 2.0));
    const Count bound = static_cast<Count>(rng.uniform() * 4);
    StateVector x{static_cast<Count>(rng.uniform() * 4), static_cast<Count>(rng.uniform() * 4),
                  static_cast<Count>(rng.uniform() * 4), bound, 10 - bound};
    const auto h = hazards(net, x, c);
    for (std::size_t k = 0; k < 8; ++k) {
      bool feasible = true;
      for (std::size_t v = 0; v < 5; ++v)
        feasible = feasible && x[v] >= net.reactants()(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(v));
      CHECK(h.h[k] >= 0.0);
      CHECK((h.h[k] > 0.0) == feasible);
      if (feasible) CHECK(net.satisfies_conservation(apply_reaction(x, net, k)));
    }
  }
}

TEST_CASE("higher-order reactions use binomial counts") {
  IntMatrix pre(2, 3), post(2, 3);
  pre << 3, 0, 0,  //
      1, 1, 1;
  post << 0, 1, 0,  //
      0, 0, 2;
  const ReactionNetwork net("order_three", {"A", "B", "C"}, {"3A", "A+B+C"}, pre, post);
  const auto h = hazards(net, StateVector{4, 2, 5}, std::vector<double>{0.5, 2.0});
  CHECK(h.h[0] == doctest::Approx(0.5 * 4));
  CHECK(h.h[1] == doctest::Approx(2.0 * 4 * 2 * 5));
  CHECK(hazards(net, StateVector{2, 0, 5}, std::vector<double>{0.5, 2.0}).h0 == 0.0);
}

TEST_CASE("dimension and rate checks") {
  const auto net = build_prokaryotic();
  CHECK_THROWS_AS(hazards(net, StateVector{1, 2, 3}, prokaryotic::true_rates()), DimensionMismatch);
  CHECK_THROWS_AS(hazards(net, prokaryotic::initial_state(), std::vector<double>{1.0}), DimensionMismatch);
  CHECK_THROWS_AS(RateParams::from_rates({0.1, -1.0}), Error);
  IntMatrix bad(1, 2);
  bad << 1, 0;
  CHECK_THROWS_AS(ReactionNetwork("bad", {"A"}, {"r"}, bad, bad), DimensionMismatch);
}

TEST_CASE("rate parameterizations agree") {
  const auto a = RateParams::from_rates(prokaryotic::true_rates());
  const auto b = RateParams::from_log_rates(a.theta);
  for (std::size_t k = 0; k < 8; ++k) CHECK(b.c[k] == doctest::Approx(a.c[k]).epsilon(1e-14));
  CHECK(a.theta[0] == doctest::Approx(std::log(0.1)));
}

TEST_CASE("uniform log-rate prior") {
  const auto priors = prokaryotic::default_priors();
  std::vector<double> theta(8, 0.0);
  CHECK(log_prior_theta(priors, theta) == doctest::Approx(-8.0 * std::log(9.0)));
  theta[3] = 2.0;  // open interval
  CHECK(log_prior_theta(priors, theta) == -std::numeric_limits<double>::infinity());
  theta[3] = -7.5;
  CHECK(log_prior_theta(priors, theta) == -std::numeric_limits<double>::infinity());
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto [t, x0] = sample_prior(priors, rng);
    CHECK(std::isfinite(log_prior_theta(priors, t)));
    for (Count v : x0) CHECK(v >= 0);
  }
}

TEST_CASE("Poisson initial prior matches its means") {
  const auto priors = prokaryotic::default_priors();
  Rng rng(5);
  std::vector<double> sum(5, 0.0);
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto x = sample_initial_state(priors, rng);
    for (std::size_t v = 0; v < 5; ++v) sum[v] += static_cast<double>(x[v]);
  }
  const std::vector<double> lambda{8, 8, 8, 5, 5};
  for (std::size_t v = 0; v < 5; ++v) CHECK(sum[v] / n == doctest::Approx(lambda[v]).epsilon(0.02));
}

TEST_CASE("network JSON round trip") {
  const auto net = build_prokaryotic();
  const auto doc = network_to_json(net);
  CHECK(doc.at("schema_version") == 1);
  CHECK(network_from_json(doc) == net);
  CHECK(network_from_json(nlohmann::json::parse(doc.dump())) == net);
  auto broken = doc;
  broken["schema_version"] = 99;
  CHECK_THROWS(network_from_json(broken));
}

TEST_CASE("observation matrices of the two scenarios") {
  const auto co = prokaryotic::complete_observation();
  const auto po = prokaryotic::partial_observation();
  CHECK(co.matrix.isIdentity());
  CHECK(co.noise_variance == 4.0);
  REQUIRE(po.matrix.rows() == 1);
  Eigen::RowVectorXd want(5);
  want << 0, 1, 2, 0, 0;
  CHECK(po.matrix.row(0) == want);
}

}  // TEST_SUITE
