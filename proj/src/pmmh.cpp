#include "skm/pmmh.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "skm/errors.hpp"

namespace skm {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
enum Stream : std::uint64_t { kChain = 1, kInit = 2, kInitFilter = 3, kCandidateFilter = 4 };
}  // namespace

void PmmhConfig::validate() const {
  if (!(iterations >= burn_in)) throw ConfigError("pmmh: need I >= B");
  if (thin < 1) throw ConfigError("pmmh: thinning factor must be >= 1");
  if (!(proposal_variance > 0.0)) throw ConfigError("pmmh: proposal variance must be positive");
  if (particles < 1) throw ConfigError("pmmh: particle count must be >= 1");
}

std::vector<double> propose_theta(std::span<const double> theta, double gamma2, Rng& rng) {
  if (gamma2 < 0.0) throw PreconditionError("proposal variance must be >= 0");
  const double sd = std::sqrt(gamma2);
  std::vector<double> out(theta.begin(), theta.end());
  for (auto& t : out) t += sd * rng.normal();
  return out;
}

double log_proposal_density(std::span<const double> to, std::span<const double> from, double gamma2) {
  double ss = 0.0;
  for (std::size_t k = 0; k < to.size(); ++k) ss += (to[k] - from[k]) * (to[k] - from[k]);
  return -0.5 * static_cast<double>(to.size()) * std::log(2.0 * std::numbers::pi * gamma2) - 0.5 * ss / gamma2;
}

double log_acceptance(double loglik_star, double logprior_star, double loglik_cur, double logprior_cur) {
  const double cur = loglik_cur + logprior_cur;
  const double star = loglik_star + logprior_star;
  if (cur == kNegInf) {
    if (star == kNegInf) throw PreconditionError("current and candidate states both have zero posterior");
    return 0.0;
  }
  if (std::isnan(star)) return kNegInf;
  return std::min(0.0, star - cur);
}

std::vector<std::size_t> postprocess(std::size_t iterations, std::size_t burn_in, std::size_t thin) {
  if (thin < 1) throw ConfigError("thinning factor must be >= 1");
  std::vector<std::size_t> idx;
  for (std::size_t i = burn_in + thin; i <= iterations; i += thin) idx.push_back(i);
  return idx;
}

ChainOutput run_pmmh(const SamplingTarget& target, const PmmhConfig& cfg) {
  cfg.validate();
  ChainOutput out;
  Rng rng(derive_seed(cfg.seed, {kChain}));
  Rng init_rng(derive_seed(cfg.seed, {kInit}));
  const std::size_t I = cfg.iterations;

  // Initialization: theta^(0) from the prior, retried while the filter is degenerate.
  std::vector<double> theta;
  LikelihoodEstimate est;
  for (std::size_t attempt = 0;; ++attempt) {
    if (attempt >= cfg.init_retry_cap)
      throw DegeneratePopulation("pmmh: no non-degenerate initial state after " + std::to_string(attempt) +
                                 " prior draws");
    theta = target.sample_prior(init_rng);
    est = target.estimate_likelihood(theta, derive_seed(cfg.seed, {kInitFilter, attempt}), cfg.keep_paths);
    out.init_attempts = attempt + 1;
    if (est.log_likelihood > kNegInf) break;
  }
  double loglik = est.log_likelihood;
  double logprior = target.log_prior(theta);
  std::optional<Trajectory> path = std::move(est.path);

  const auto retained = postprocess(I, cfg.burn_in, cfg.thin);
  out.retained = retained;
  out.theta.reserve(I + 1);
  out.log_likelihood.reserve(I + 1);
  out.candidate_log_likelihood.reserve(I);
  out.accepted.reserve(I);
  out.theta.push_back(theta);
  out.log_likelihood.push_back(loglik);

  std::size_t next_keep = 0;
  std::size_t n_accepted = 0;
  for (std::size_t i = 1; i <= I; ++i) {
    auto candidate = propose_theta(theta, cfg.proposal_variance, rng);
    const double lp_star = target.log_prior(candidate);
    LikelihoodEstimate cand;
    // outside the prior support the filter would be wasted work
    if (lp_star > kNegInf) {
      cand = target.estimate_likelihood(candidate, derive_seed(cfg.seed, {kCandidateFilter, i}), cfg.keep_paths);
    } else {
      cand.log_likelihood = kNegInf;
    }
    const double log_alpha = log_acceptance(cand.log_likelihood, lp_star, loglik, logprior);
    const double u = rng.uniform_open0();
    const bool accept = std::log(u) <= log_alpha && log_alpha > kNegInf;
    out.candidate_log_likelihood.push_back(cand.log_likelihood);
    if (accept) {
      theta = std::move(candidate);
      loglik = cand.log_likelihood;
      logprior = lp_star;
      path = std::move(cand.path);
      ++n_accepted;
    }
    // on rejection theta, path and the stored estimate carry forward unchanged
    out.accepted.push_back(accept ? 1 : 0);
    out.theta.push_back(theta);
    out.log_likelihood.push_back(loglik);
    if (next_keep < retained.size() && retained[next_keep] == i) {
      out.retained_theta.push_back(theta);
      if (cfg.keep_paths && path) out.retained_paths.push_back(*path);
      ++next_keep;
    }
  }
  out.acceptance_rate = I > 0 ? static_cast<double>(n_accepted) / static_cast<double>(I) : 0.0;
  return out;
}

ChainOutput run_pmmh(const ReactionNetwork& network, const PriorSpec& priors, const ObservationSet& obs,
                     const ParameterLayout& layout, const PmmhConfig& cfg, const FilterOptions& filter) {
  const KineticModelTarget target(network, priors, obs, layout, cfg.particles, filter);
  return run_pmmh(target, cfg);
}

void write_chain_csv(std::ostream& os, const ChainOutput& chain) {
  const std::size_t d = chain.theta.empty() ? 0 : chain.theta.front().size();
  os << "i";
  for (std::size_t k = 1; k <= d; ++k) os << ",theta_" << k;
  os << ",loglik,accepted\n";
  os.precision(17);
  for (std::size_t i = 0; i < chain.theta.size(); ++i) {
    os << i;
    for (double t : chain.theta[i]) os << ',' << t;
    os << ',' << chain.log_likelihood[i] << ',' << (i == 0 ? 0 : static_cast<int>(chain.accepted[i - 1])) << '\n';
  }
}

}  // namespace skm
