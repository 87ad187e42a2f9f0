#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "skm/random.hpp"

namespace skm {

using Count = std::int64_t;
/// Species populations (molecule counts), one entry per species.
using StateVector = std::vector<Count>;
using IntMatrix = Eigen::Matrix<Count, Eigen::Dynamic, Eigen::Dynamic>;

/// A linear invariant coeffs · x = total of the populations.
struct ConservationLaw {
  std::vector<Count> coeffs;
  Count total = 0;

  friend bool operator==(const ConservationLaw&, const ConservationLaw&) = default;
};

/// Species/reaction structure of a stochastic kinetic model.
///
/// Reactant and product coefficients are K x V; the stoichiometry matrix is
/// V x K and always equals (Q - P)^T. Immutable after construction.
class ReactionNetwork {
 public:
  ReactionNetwork(std::string name, std::vector<std::string> species, std::vector<std::string> reactions,
                  IntMatrix reactants, IntMatrix products, std::vector<ConservationLaw> laws = {});

  const std::string& name() const { return name_; }
  std::size_t species_count() const { return species_.size(); }
  std::size_t reaction_count() const { return reactions_.size(); }
  const std::vector<std::string>& species_names() const { return species_; }
  const std::vector<std::string>& reaction_names() const { return reactions_; }
  const IntMatrix& reactants() const { return reactants_; }
  const IntMatrix& products() const { return products_; }
  const IntMatrix& stoichiometry() const { return stoichiometry_; }
  const std::vector<ConservationLaw>& conservation_laws() const { return laws_; }

  /// Fills h with the K hazards at state x for rate constants c and returns h0.
  /// No allocation; this is the SSA inner loop.
  double fill_hazards(std::span<const Count> x, std::span<const double> c, std::span<double> h) const {
    double h0 = 0.0;
    for (std::size_t k = 0; k < rate_scale_.size(); ++k) {
      h[k] = hazard(k, x, c);
      h0 += h[k];
    }
    return h0;
  }

  /// Hazard of reaction k alone: c_k * prod_v binom(x_v, p_v).
  double hazard(std::size_t k, std::span<const Count> x, std::span<const double> c) const {
    // the 1/p_v! factors are folded into rate_scale_
    if (low_order_) {
      // at most two reactant species of order <= 2: x(x-1) and x vanish
      // exactly when x < p, so no branch is needed
      const auto& t = low_terms_[k];
      const Count xa = x[t.species_a], xb = x[t.species_b];
      const Count fa = (t.order_a >= 1 ? xa : 1) * (t.order_a >= 2 ? xa - 1 : 1);
      const Count fb = (t.order_b >= 1 ? xb : 1) * (t.order_b >= 2 ? xb - 1 : 1);
      return c[k] * rate_scale_[k] * static_cast<double>(fa) * static_cast<double>(fb);
    }
    double hk = c[k] * rate_scale_[k];
    for (std::uint32_t t = term_begin_[k]; t < term_begin_[k + 1]; ++t) {
      const Count xv = x[term_species_[t]];
      const Count p = term_order_[t];
      if (xv < p) return 0.0;
      for (Count i = 0; i < p; ++i) hk *= static_cast<double>(xv - i);
    }
    return hk;
  }

  /// Reactions whose hazard can change when reaction k fires.
  std::span<const std::uint32_t> dependents(std::size_t k) const {
    return {dependents_.data() + dependent_begin_[k], dependents_.data() + dependent_begin_[k + 1]};
  }

  /// x += S[:, k] without feasibility checks.
  void fire(std::span<Count> x, std::size_t k) const {
    for (std::uint32_t t = delta_begin_[k]; t < delta_begin_[k + 1]; ++t) x[delta_species_[t]] += delta_value_[t];
  }

  /// True when every declared conservation law holds at x.
  bool satisfies_conservation(std::span<const Count> x) const;

  friend bool operator==(const ReactionNetwork& a, const ReactionNetwork& b);

 private:
  std::string name_;
  std::vector<std::string> species_;
  std::vector<std::string> reactions_;
  IntMatrix reactants_;
  IntMatrix products_;
  IntMatrix stoichiometry_;
  std::vector<ConservationLaw> laws_;
  // flattened reactant and net-change terms, per reaction k in [begin[k], begin[k+1])
  std::vector<double> rate_scale_;
  std::vector<std::uint32_t> term_begin_, term_species_;
  std::vector<Count> term_order_;
  std::vector<std::uint32_t> delta_begin_, delta_species_;
  std::vector<Count> delta_value_;
  std::vector<std::uint32_t> dependent_begin_, dependents_;
  struct LowOrderTerms {
    std::uint32_t species_a = 0, species_b = 0;
    Count order_a = 0, order_b = 0;
  };
  bool low_order_ = true;
  std::vector<LowOrderTerms> low_terms_;
};

/// Rate constants c and log-rates theta = ln(c).
struct RateParams {
  std::vector<double> c;
  std::vector<double> theta;

  static RateParams from_rates(std::vector<double> c);
  static RateParams from_log_rates(std::vector<double> theta);
};

/// Independent Poisson prior on each initial population.
struct PoissonInitialPrior {
  std::vector<double> means;
};

/// Prior over an explicit finite list of initial states.
struct CategoricalInitialPrior {
  std::vector<StateVector> states;
  std::vector<double> probabilities;
};

struct UniformBounds {
  double lo;
  double hi;
};

struct PriorSpec {
  std::vector<UniformBounds> theta_bounds;
  std::variant<PoissonInitialPrior, CategoricalInitialPrior> x0_prior;

  void validate() const;
};

/// y_n = M x_n + w_n, w_n ~ N(0, sigma2 I_D).
struct ObservationModel {
  Eigen::MatrixXd matrix;
  double noise_variance = 1.0;

  std::size_t dim() const { return static_cast<std::size_t>(matrix.rows()); }
  void validate(std::size_t species_count) const;
};

struct Hazards {
  std::vector<double> h;
  double h0 = 0.0;
};

/// The 5-species, 8-reaction prokaryotic autoregulation network with species
/// order [RNA, P, P2, DNA.P2, DNA] and conservation DNA.P2 + DNA = copies.
ReactionNetwork build_prokaryotic(Count gene_copies = 10);

/// Reference setup of the prokaryotic experiments.
namespace prokaryotic {
inline constexpr std::size_t kRna = 0, kP = 1, kP2 = 2, kDnaP2 = 3, kDna = 4;
std::vector<double> true_rates();
StateVector initial_state();
PriorSpec default_priors();
ObservationModel complete_observation(double noise_variance = 4.0);
ObservationModel partial_observation(double noise_variance = 4.0);
}  // namespace prokaryotic

Hazards hazards(const ReactionNetwork& network, std::span<const Count> state, std::span<const double> c);

/// Returns state + S[:, k]; throws InvalidTransition on a negative population.
StateVector apply_reaction(std::span<const Count> state, const ReactionNetwork& network, std::size_t k);

/// Sum of log uniform densities; -inf outside the open support.
double log_prior_theta(const PriorSpec& priors, std::span<const double> theta);

std::vector<double> sample_theta_prior(const PriorSpec& priors, Rng& rng);
StateVector sample_initial_state(const PriorSpec& priors, Rng& rng);
std::pair<std::vector<double>, StateVector> sample_prior(const PriorSpec& priors, Rng& rng);

nlohmann::json network_to_json(const ReactionNetwork& network);
ReactionNetwork network_from_json(const nlohmann::json& doc);

}  // namespace skm
