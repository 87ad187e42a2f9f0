#include "skm/npmc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>

#include <tbb/parallel_for.h>

#include "skm/diagnostics.hpp"
#include "skm/errors.hpp"
#include "skm/resampling.hpp"

namespace skm {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
enum Stream : std::uint64_t { kDraw = 1, kFilter = 2, kResample = 3 };
}  // namespace

void NpmcConfig::validate() const {
  if (iterations < 1) throw ConfigError("npmc: need L >= 1");
  if (samples < 2) throw ConfigError("npmc: need M >= 2");
  if (!(clip > 1 && clip < samples)) throw ConfigError("npmc: clipping parameter must satisfy 1 < M_T < M");
  if (particles < 1) throw ConfigError("npmc: particle count must be >= 1");
  if (!(jitter > 0.0)) throw ConfigError("npmc: covariance jitter must be positive");
}

ProposalPdf ProposalPdf::prior() { return ProposalPdf{}; }

ProposalPdf ProposalPdf::gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) throw DimensionMismatch("proposal mean/cov mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw PreconditionError("proposal covariance is not positive definite");
  ProposalPdf q;
  q.kind_ = Kind::gaussian;
  q.mean_ = std::move(mean);
  q.cov_ = std::move(cov);
  q.chol_ = llt.matrixL();
  const double d = static_cast<double>(q.mean_.size());
  q.log_norm_ = -0.5 * d * std::log(2.0 * std::numbers::pi) - q.chol_.diagonal().array().log().sum();
  return q;
}

std::vector<double> ProposalPdf::sample(const SamplingTarget& target, Rng& rng) const {
  if (kind_ == Kind::prior) return target.sample_prior(rng);
  Eigen::VectorXd z(mean_.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = rng.normal();
  const Eigen::VectorXd x = mean_ + chol_ * z;
  return {x.data(), x.data() + x.size()};
}

double ProposalPdf::log_density(const SamplingTarget& target, std::span<const double> theta) const {
  if (kind_ == Kind::prior) return target.log_prior(theta);
  if (static_cast<Eigen::Index>(theta.size()) != mean_.size()) throw DimensionMismatch("theta/proposal mismatch");
  Eigen::VectorXd r(mean_.size());
  for (Eigen::Index k = 0; k < r.size(); ++k) r(k) = theta[static_cast<std::size_t>(k)] - mean_(k);
  const Eigen::VectorXd z = chol_.triangularView<Eigen::Lower>().solve(r);
  return log_norm_ - 0.5 * z.squaredNorm();
}

double compute_log_iw(double loglik, double logprior, double logproposal) {
  if (logproposal == kNegInf || std::isnan(logproposal))
    throw PreconditionError("proposal assigns zero density to its own draw");
  if (loglik == kNegInf || logprior == kNegInf || std::isnan(loglik)) return kNegInf;
  // prior proposal: the prior cancels exactly
  if (logprior == logproposal) return loglik;
  return loglik + logprior - logproposal;
}

std::vector<double> clip_weights(std::span<const double> log_w, std::size_t clip) {
  const std::size_t M = log_w.size();
  if (clip < 1 || clip > M) throw PreconditionError("clipping parameter out of range");
  std::vector<double> lw(log_w.begin(), log_w.end());
  for (auto& v : lw)
    if (std::isnan(v)) v = kNegInf;
  std::vector<std::size_t> order(M);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lw[a] > lw[b]; });
  const double threshold = lw[order[clip - 1]];
  for (std::size_t k = 0; k < clip; ++k) lw[order[k]] = threshold;
  std::vector<double> w(M);
  if (!(normalize_log_weights(lw, w) > kNegInf))
    throw DegeneratePopulation("every transformed importance weight is zero");
  return w;
}

std::vector<std::size_t> multinomial_resample(std::span<const double> weights, std::size_t count, Rng& rng) {
  return multinomial_indices(weights, count, rng);
}

GaussianFit fit_gaussian(const Eigen::MatrixXd& samples, double jitter) {
  if (samples.rows() < 1) throw PreconditionError("fit_gaussian needs samples");
  GaussianFit fit;
  const double M = static_cast<double>(samples.rows());
  fit.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - fit.mean.transpose();
  fit.raw_cov = (centered.transpose() * centered) / M;
  fit.cov = fit.raw_cov;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit.cov, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < jitter) {
    fit.cov += jitter * Eigen::MatrixXd::Identity(fit.cov.rows(), fit.cov.cols());
    fit.jittered = true;
  }
  return fit;
}

NpmcRun run_npmc(const SamplingTarget& target, const NpmcConfig& cfg) {
  cfg.validate();
  const std::size_t M = cfg.samples;
  const std::size_t d = target.dim();
  NpmcRun run;
  ProposalPdf q = ProposalPdf::prior();

  for (std::size_t l = 1; l <= cfg.iterations; ++l) {
    const auto t0 = std::chrono::steady_clock::now();
    NpmcIterationOutput it;
    it.iteration = l;
    it.proposal = q;
    it.samples.resize(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(d));
    std::vector<std::vector<double>> draws(M);
    Rng draw_rng(derive_seed(cfg.seed, {kDraw, l}));
    for (std::size_t i = 0; i < M; ++i) {
      draws[i] = q.sample(target, draw_rng);
      for (std::size_t k = 0; k < d; ++k) it.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = draws[i][k];
    }

    it.log_likelihood.assign(M, kNegInf);
    it.log_iw.assign(M, kNegInf);
    it.paths.assign(M, std::nullopt);
    auto evaluate = [&](std::size_t i) {
      const double logq = q.log_density(target, draws[i]);
      const double lp = target.log_prior(draws[i]);
      if (lp > kNegInf) {
        auto est = target.estimate_likelihood(draws[i], derive_seed(cfg.seed, {kFilter, l, i}), cfg.keep_paths);
        it.log_likelihood[i] = est.log_likelihood;
        it.paths[i] = std::move(est.path);
      }
      it.log_iw[i] = compute_log_iw(it.log_likelihood[i], lp, logq);
    };
    if (cfg.parallel) {
      tbb::parallel_for(std::size_t{0}, M, evaluate);
    } else {
      for (std::size_t i = 0; i < M; ++i) evaluate(i);
    }

    try {
      it.tiw = clip_weights(it.log_iw, cfg.clip);
    } catch (const DegeneratePopulation& e) {
      run.aborted = true;
      run.diagnostic = "iteration " + std::to_string(l) + ": " + e.what();
      run.next_proposal = q;
      return run;
    }
    it.ness = ness_is(it.tiw);

    Rng resample_rng(derive_seed(cfg.seed, {kResample, l}));
    it.resampled_index = multinomial_resample(it.tiw, M, resample_rng);
    it.resampled.resize(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < M; ++i)
      it.resampled.row(static_cast<Eigen::Index>(i)) = it.samples.row(static_cast<Eigen::Index>(it.resampled_index[i]));
    it.fit = fit_gaussian(it.resampled, cfg.jitter);
    q = ProposalPdf::gaussian(it.fit.mean, it.fit.cov);
    it.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    run.iterations.push_back(std::move(it));
  }
  run.next_proposal = q;
  return run;
}

NpmcRun run_npmc(const ReactionNetwork& network, const PriorSpec& priors, const ObservationSet& obs,
                 const ParameterLayout& layout, const NpmcConfig& cfg, const FilterOptions& filter) {
  const KineticModelTarget target(network, priors, obs, layout, cfg.particles, filter);
  return run_npmc(target, cfg);
}

PosteriorEstimates posterior_estimates(const NpmcIterationOutput& it) {
  PosteriorEstimates est;
  const std::size_t M = it.tiw.size();
  const auto d = static_cast<std::size_t>(it.samples.cols());
  est.theta.assign(d, 0.0);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t k = 0; k < d; ++k)
      est.theta[k] += it.tiw[i] * it.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));

  const Trajectory* shape = nullptr;
  for (std::size_t i = 0; i < M; ++i) {
    if (it.tiw[i] <= 0.0) continue;
    if (i >= it.paths.size() || !it.paths[i]) return est;  // paths absent: theta only
    shape = &*it.paths[i];
  }
  if (shape == nullptr) return est;
  const std::size_t N = shape->states.size();
  const std::size_t V = shape->x0.size();
  est.x.assign(N, std::vector<double>(V, 0.0));
  for (std::size_t i = 0; i < M; ++i) {
    if (it.tiw[i] <= 0.0) continue;
    const auto& p = *it.paths[i];
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t v = 0; v < V; ++v) est.x[n][v] += it.tiw[i] * static_cast<double>(p.states[n][v]);
  }
  return est;
}

void write_npmc_csv(std::ostream& os, const NpmcRun& run) {
  const std::size_t d = run.iterations.empty() ? 0 : static_cast<std::size_t>(run.iterations.front().samples.cols());
  os << "l,i";
  for (std::size_t k = 1; k <= d; ++k) os << ",theta_" << k;
  os << ",logIW,TIW\n";
  os.precision(17);
  for (const auto& it : run.iterations) {
    for (Eigen::Index i = 0; i < it.samples.rows(); ++i) {
      os << it.iteration << ',' << i + 1;
      for (Eigen::Index k = 0; k < it.samples.cols(); ++k) os << ',' << it.samples(i, k);
      os << ',' << it.log_iw[static_cast<std::size_t>(i)] << ',' << it.tiw[static_cast<std::size_t>(i)] << '\n';
    }
  }
}

}  // namespace skm
