#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "skm/gillespie.hpp"
#include "skm/random.hpp"
#include "skm/sampling_target.hpp"

namespace skm {

struct NpmcConfig {
  std::size_t iterations = 10;   // L
  std::size_t samples = 1000;    // M
  std::size_t clip = 100;        // M_T
  std::size_t particles = 100;   // J
  std::uint64_t seed = 1;
  double jitter = 1e-8;
  /// Draw and keep one latent path per sample.
  bool keep_paths = true;
  /// Evaluate the M likelihoods concurrently. Output does not depend on it.
  bool parallel = true;

  void validate() const;
};

/// q_1 is the prior; later proposals are moment-matched Gaussians.
class ProposalPdf {
 public:
  enum class Kind { prior, gaussian };

  static ProposalPdf prior();
  /// Throws PreconditionError when cov is not positive definite.
  static ProposalPdf gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov);

  Kind kind() const { return kind_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& cov() const { return cov_; }

  std::vector<double> sample(const SamplingTarget& target, Rng& rng) const;
  double log_density(const SamplingTarget& target, std::span<const double> theta) const;

 private:
  Kind kind_ = Kind::prior;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;  // lower factor
  double log_norm_ = 0.0;
};

struct GaussianFit {
  Eigen::VectorXd mean;
  /// 1/M-normalized covariance, plus jitter * I when its smallest eigenvalue
  /// is below the jitter.
  Eigen::MatrixXd cov;
  /// Covariance before the jitter rule.
  Eigen::MatrixXd raw_cov;
  bool jittered = false;
};

struct NpmcIterationOutput {
  std::size_t iteration = 0;  // 1-based
  ProposalPdf proposal;
  Eigen::MatrixXd samples;     // M x d
  std::vector<double> log_likelihood;
  std::vector<double> log_iw;  // unnormalized
  std::vector<double> tiw;     // normalized transformed weights
  std::vector<std::size_t> resampled_index;
  Eigen::MatrixXd resampled;   // M x d
  GaussianFit fit;
  std::vector<std::optional<Trajectory>> paths;
  double ness = 0.0;
  double seconds = 0.0;
};

struct NpmcRun {
  std::vector<NpmcIterationOutput> iterations;
  bool aborted = false;
  std::string diagnostic;
  /// Proposal for iteration L+1 (or the last valid one after an abort).
  ProposalPdf next_proposal = ProposalPdf::prior();
};

/// log-likelihood + log-prior - log-proposal. Throws when the proposal gives
/// its own draw zero density.
double compute_log_iw(double loglik, double logprior, double logproposal);

/// Clipped, normalized importance weights from unnormalized log-weights.
/// The top `clip` weights (descending, ties by lower index first) are replaced
/// by the clip-th largest one. Throws DegeneratePopulation if every
/// transformed weight is zero.
std::vector<double> clip_weights(std::span<const double> log_w, std::size_t clip);

/// `count` i.i.d. draws of indices with probabilities `weights`.
std::vector<std::size_t> multinomial_resample(std::span<const double> weights, std::size_t count, Rng& rng);

/// Mean and 1/M covariance of the rows of `samples`.
GaussianFit fit_gaussian(const Eigen::MatrixXd& samples, double jitter);

NpmcRun run_npmc(const SamplingTarget& target, const NpmcConfig& cfg);

NpmcRun run_npmc(const ReactionNetwork& network, const PriorSpec& priors, const ObservationSet& obs,
                 const ParameterLayout& layout, const NpmcConfig& cfg, const FilterOptions& filter = {});

struct PosteriorEstimates {
  std::vector<double> theta;
  /// TIW-weighted mean population per (n, v); empty when no paths were kept.
  std::vector<std::vector<double>> x;
};

PosteriorEstimates posterior_estimates(const NpmcIterationOutput& it);

/// One row per (iteration, sample): l, i, theta_1..theta_d, logIW, TIW.
void write_npmc_csv(std::ostream& os, const NpmcRun& run);

}  // namespace skm
