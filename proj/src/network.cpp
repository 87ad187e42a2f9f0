#include "skm/network.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "skm/errors.hpp"

namespace skm {

ReactionNetwork::ReactionNetwork(std::string name, std::vector<std::string> species,
                                 std::vector<std::string> reactions, IntMatrix reactants, IntMatrix products,
                                 std::vector<ConservationLaw> laws)
    : name_(std::move(name)),
      species_(std::move(species)),
      reactions_(std::move(reactions)),
      reactants_(std::move(reactants)),
      products_(std::move(products)),
      laws_(std::move(laws)) {
  const auto V = static_cast<Eigen::Index>(species_.size());
  const auto K = static_cast<Eigen::Index>(reactions_.size());
  if (V == 0 || K == 0) throw DimensionMismatch("network needs at least one species and one reaction");
  if (reactants_.rows() != K || reactants_.cols() != V || products_.rows() != K || products_.cols() != V)
    throw DimensionMismatch("reactant/product coefficient matrices must be K x V");
  if ((reactants_.array() < 0).any() || (products_.array() < 0).any())
    throw Error("reactant and product coefficients must be nonnegative");
  stoichiometry_ = (products_ - reactants_).transpose();

  term_begin_.push_back(0);
  delta_begin_.push_back(0);
  for (Eigen::Index k = 0; k < K; ++k) {
    double scale = 1.0;
    for (Eigen::Index v = 0; v < V; ++v) {
      if (const Count p = reactants_(k, v); p > 0) {
        term_species_.push_back(static_cast<std::uint32_t>(v));
        term_order_.push_back(p);
        for (Count i = 2; i <= p; ++i) scale /= static_cast<double>(i);
      }
      if (const Count d = stoichiometry_(v, k); d != 0) {
        delta_species_.push_back(static_cast<std::uint32_t>(v));
        delta_value_.push_back(d);
      }
    }
    rate_scale_.push_back(scale);
    term_begin_.push_back(static_cast<std::uint32_t>(term_species_.size()));
    delta_begin_.push_back(static_cast<std::uint32_t>(delta_species_.size()));
  }
  low_terms_.resize(static_cast<std::size_t>(K));
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto b = term_begin_[k], e = term_begin_[k + 1];
    auto& t = low_terms_[k];
    if (e - b > 2) low_order_ = false;
    for (auto i = b; i < e; ++i) {
      if (term_order_[i] > 2) low_order_ = false;
      if (i == b) t.species_a = term_species_[i], t.order_a = term_order_[i];
      else t.species_b = term_species_[i], t.order_b = term_order_[i];
    }
  }
  dependent_begin_.push_back(0);
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index j = 0; j < K; ++j) {
      bool touched = false;
      for (Eigen::Index v = 0; v < V; ++v) touched = touched || (stoichiometry_(v, k) != 0 && reactants_(j, v) > 0);
      if (touched) dependents_.push_back(static_cast<std::uint32_t>(j));
    }
    dependent_begin_.push_back(static_cast<std::uint32_t>(dependents_.size()));
  }

  for (const auto& law : laws_) {
    if (law.coeffs.size() != species_.size()) throw DimensionMismatch("conservation law has wrong length");
    for (Eigen::Index k = 0; k < K; ++k) {
      Count change = 0;
      for (Eigen::Index v = 0; v < V; ++v) change += law.coeffs[static_cast<std::size_t>(v)] * stoichiometry_(v, k);
      if (change != 0) throw Error("declared conservation law is not preserved by reaction " + reactions_[k]);
    }
  }
}

bool ReactionNetwork::satisfies_conservation(std::span<const Count> x) const {
  if (x.size() != species_.size()) return false;
  for (const auto& law : laws_) {
    Count q = 0;
    for (std::size_t v = 0; v < x.size(); ++v) q += law.coeffs[v] * x[v];
    if (q != law.total) return false;
  }
  return true;
}

bool operator==(const ReactionNetwork& a, const ReactionNetwork& b) {
  return a.name_ == b.name_ && a.species_ == b.species_ && a.reactions_ == b.reactions_ &&
         a.reactants_ == b.reactants_ && a.products_ == b.products_ && a.laws_ == b.laws_;
}

RateParams RateParams::from_rates(std::vector<double> c) {
  RateParams r;
  r.theta.reserve(c.size());
  for (double ck : c) {
    if (!(ck > 0.0)) throw Error("rate constants must be positive");
    r.theta.push_back(std::log(ck));
  }
  r.c = std::move(c);
  return r;
}

RateParams RateParams::from_log_rates(std::vector<double> theta) {
  RateParams r;
  r.c.reserve(theta.size());
  for (double t : theta) r.c.push_back(std::exp(t));
  r.theta = std::move(theta);
  return r;
}

void PriorSpec::validate() const {
  for (const auto& b : theta_bounds)
    if (!(b.lo < b.hi)) throw ConfigError("uniform prior needs lo < hi");
  if (const auto* p = std::get_if<PoissonInitialPrior>(&x0_prior)) {
    for (double m : p->means)
      if (!(m > 0.0)) throw ConfigError("Poisson prior means must be positive");
  } else {
    const auto& cat = std::get<CategoricalInitialPrior>(x0_prior);
    if (cat.states.empty() || cat.states.size() != cat.probabilities.size())
      throw ConfigError("categorical initial prior needs one probability per state");
    double total = 0.0;
    for (double p : cat.probabilities) {
      if (!(p >= 0.0)) throw ConfigError("categorical probabilities must be nonnegative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("categorical probabilities must sum to 1");
  }
}

void ObservationModel::validate(std::size_t species_count) const {
  if (matrix.rows() < 1) throw ConfigError("observation matrix needs at least one row");
  if (static_cast<std::size_t>(matrix.cols()) != species_count)
    throw DimensionMismatch("observation matrix column count must equal species count");
  if (!(noise_variance > 0.0)) throw ConfigError("observation noise variance must be positive");
}

ReactionNetwork build_prokaryotic(Count gene_copies) {
  // Species: RNA, P, P2, DNA.P2, DNA
  IntMatrix pre = IntMatrix::Zero(8, 5);
  IntMatrix post = IntMatrix::Zero(8, 5);
  using namespace prokaryotic;
  // r1: DNA + P2 -> DNA.P2
  pre(0, kDna) = 1, pre(0, kP2) = 1, post(0, kDnaP2) = 1;
  // r2: DNA.P2 -> DNA + P2
  pre(1, kDnaP2) = 1, post(1, kDna) = 1, post(1, kP2) = 1;
  // r3: DNA -> DNA + RNA
  pre(2, kDna) = 1, post(2, kDna) = 1, post(2, kRna) = 1;
  // r4: RNA -> RNA + P
  pre(3, kRna) = 1, post(3, kRna) = 1, post(3, kP) = 1;
  // r5: 2P -> P2
  pre(4, kP) = 2, post(4, kP2) = 1;
  // r6: P2 -> 2P
  pre(5, kP2) = 1, post(5, kP) = 2;
  // r7: RNA -> 0
  pre(6, kRna) = 1;
  // r8: P -> 0
  pre(7, kP) = 1;
  return ReactionNetwork("prokaryotic_autoregulation", {"RNA", "P", "P2", "DNA_P2", "DNA"},
                         {"r1", "r2", "r3", "r4", "r5", "r6", "r7", "r8"}, pre, post,
                         {ConservationLaw{{0, 0, 0, 1, 1}, gene_copies}});
}

namespace prokaryotic {

std::vector<double> true_rates() { return {0.1, 0.7, 0.35, 0.2, 0.1, 0.9, 0.3, 0.1}; }

StateVector initial_state() { return {8, 8, 8, 5, 5}; }

PriorSpec default_priors() {
  PriorSpec p;
  p.theta_bounds.assign(8, UniformBounds{-7.0, 2.0});
  p.x0_prior = PoissonInitialPrior{{8.0, 8.0, 8.0, 5.0, 5.0}};
  return p;
}

ObservationModel complete_observation(double noise_variance) {
  return ObservationModel{Eigen::MatrixXd::Identity(5, 5), noise_variance};
}

ObservationModel partial_observation(double noise_variance) {
  Eigen::MatrixXd m(1, 5);
  m << 0, 1, 2, 0, 0;
  return ObservationModel{m, noise_variance};
}

}  // namespace prokaryotic

Hazards hazards(const ReactionNetwork& network, std::span<const Count> state, std::span<const double> c) {
  if (state.size() != network.species_count()) throw DimensionMismatch("state length != species count");
  if (c.size() != network.reaction_count()) throw DimensionMismatch("rate vector length != reaction count");
  Hazards out;
  out.h.resize(network.reaction_count());
  out.h0 = network.fill_hazards(state, c, out.h);
  return out;
}

StateVector apply_reaction(std::span<const Count> state, const ReactionNetwork& network, std::size_t k) {
  if (state.size() != network.species_count()) throw DimensionMismatch("state length != species count");
  if (k >= network.reaction_count()) throw DimensionMismatch("reaction index out of range");
  StateVector next(state.begin(), state.end());
  network.fire(next, k);
  for (std::size_t v = 0; v < next.size(); ++v)
    if (next[v] < 0)
      throw InvalidTransition("reaction " + network.reaction_names()[k] + " drives " + network.species_names()[v] +
                              " negative");
  return next;
}

double log_prior_theta(const PriorSpec& priors, std::span<const double> theta) {
  if (theta.size() != priors.theta_bounds.size()) throw DimensionMismatch("theta length != prior length");
  double lp = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const auto [lo, hi] = priors.theta_bounds[k];
    if (!(theta[k] > lo && theta[k] < hi)) return -std::numeric_limits<double>::infinity();
    lp -= std::log(hi - lo);
  }
  return lp;
}

std::vector<double> sample_theta_prior(const PriorSpec& priors, Rng& rng) {
  std::vector<double> theta(priors.theta_bounds.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const auto [lo, hi] = priors.theta_bounds[k];
    double t;
    do {
      t = rng.uniform(lo, hi);
    } while (t <= lo);  // open support
    theta[k] = t;
  }
  return theta;
}

StateVector sample_initial_state(const PriorSpec& priors, Rng& rng) {
  if (const auto* p = std::get_if<PoissonInitialPrior>(&priors.x0_prior)) {
    StateVector x(p->means.size());
    for (std::size_t v = 0; v < x.size(); ++v) x[v] = rng.poisson(p->means[v]);
    return x;
  }
  const auto& cat = std::get<CategoricalInitialPrior>(priors.x0_prior);
  double u = rng.uniform();
  for (std::size_t i = 0; i + 1 < cat.states.size(); ++i) {
    u -= cat.probabilities[i];
    if (u < 0.0) return cat.states[i];
  }
  return cat.states.back();
}

std::pair<std::vector<double>, StateVector> sample_prior(const PriorSpec& priors, Rng& rng) {
  auto theta = sample_theta_prior(priors, rng);
  auto x0 = sample_initial_state(priors, rng);
  return {std::move(theta), std::move(x0)};
}

nlohmann::json network_to_json(const ReactionNetwork& network) {
  using nlohmann::json;
  const auto& names = network.species_names();
  json reactions = json::array();
  for (std::size_t k = 0; k < network.reaction_count(); ++k) {
    json reactants = json::object(), products = json::object();
    for (std::size_t v = 0; v < names.size(); ++v) {
      const auto r = network.reactants()(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(v));
      const auto p = network.products()(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(v));
      if (r != 0) reactants[names[v]] = r;
      if (p != 0) products[names[v]] = p;
    }
    reactions.push_back({{"name", network.reaction_names()[k]}, {"reactants", reactants}, {"products", products}});
  }
  json laws = json::array();
  for (const auto& law : network.conservation_laws()) {
    json coeffs = json::object();
    for (std::size_t v = 0; v < names.size(); ++v)
      if (law.coeffs[v] != 0) coeffs[names[v]] = law.coeffs[v];
    laws.push_back({{"coefficients", coeffs}, {"total", law.total}});
  }
  return json{{"schema_version", 1},
              {"name", network.name()},
              {"species", names},
              {"reactions", reactions},
              {"conservation_laws", laws}};
}

ReactionNetwork network_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("schema_version") != 1) throw ConfigError("unsupported network schema_version " + doc.at("schema_version").dump());
    const auto species = doc.at("species").get<std::vector<std::string>>();
    std::map<std::string, std::size_t> index;
    for (std::size_t v = 0; v < species.size(); ++v) {
      if (!index.emplace(species[v], v).second) throw ConfigError("duplicate species name " + species[v]);
    }
    auto species_index = [&](const std::string& s) {
      const auto it = index.find(s);
      if (it == index.end()) throw ConfigError("unknown species " + s);
      return static_cast<Eigen::Index>(it->second);
    };
    const auto& rx = doc.at("reactions");
    const auto K = static_cast<Eigen::Index>(rx.size());
    const auto V = static_cast<Eigen::Index>(species.size());
    IntMatrix pre = IntMatrix::Zero(K, V), post = IntMatrix::Zero(K, V);
    std::vector<std::string> names;
    for (Eigen::Index k = 0; k < K; ++k) {
      const auto& r = rx[static_cast<std::size_t>(k)];
      names.push_back(r.value("name", "r" + std::to_string(k + 1)));
      // bound to locals: items() does not extend the lifetime of a temporary
      const auto reactants = r.value("reactants", nlohmann::json::object());
      const auto products = r.value("products", nlohmann::json::object());
      for (const auto& [s, n] : reactants.items()) pre(k, species_index(s)) = n.get<Count>();
      for (const auto& [s, n] : products.items()) post(k, species_index(s)) = n.get<Count>();
    }
    std::vector<ConservationLaw> laws;
    const auto law_docs = doc.value("conservation_laws", nlohmann::json::array());
    for (const auto& l : law_docs) {
      ConservationLaw law{std::vector<Count>(species.size(), 0), l.at("total").get<Count>()};
      for (const auto& [s, n] : l.at("coefficients").items())
        law.coeffs[static_cast<std::size_t>(species_index(s))] = n.get<Count>();
      laws.push_back(std::move(law));
    }
    return ReactionNetwork(doc.value("name", "network"), species, names, pre, post, laws);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed network document: ") + e.what());
  }
}

}  // namespace skm
