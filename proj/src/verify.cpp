#include "skm/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "skm/errors.hpp"
#include "skm/npmc.hpp"
#include "skm/particle_filter.hpp"
#include "skm/random.hpp"

namespace skm::verify {

namespace {

double sigmoid2(double t) { return 1.0 / (1.0 + std::exp(-2.0 * t)); }

/// Composite Simpson rule on [lo, hi] with an even number of intervals.
template <class F>
double simpson(F&& f, double lo, double hi, std::size_t intervals) {
  if (intervals % 2 == 1) ++intervals;
  const double h = (hi - lo) / static_cast<double>(intervals);
  double acc = f(lo) + f(hi);
  for (std::size_t i = 1; i < intervals; ++i) acc += (i % 2 == 1 ? 4.0 : 2.0) * f(lo + h * static_cast<double>(i));
  return acc * h / 3.0;
}

struct Estimates {
  double plain;
  double clipped;
};

/// Self-normalized plain and clipped estimates of (f, pi) from log-weights.
Estimates weighted_estimates(std::span<const double> f, std::span<const double> log_w, std::size_t clip) {
  std::vector<double> w(log_w.size());
  double m = -std::numeric_limits<double>::infinity();
  for (double lw : log_w) m = std::max(m, lw);
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) total += (w[i] = std::exp(log_w[i] - m));
  double plain = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) plain += f[i] * w[i] / total;
  const auto tiw = clip_weights(log_w, clip);
  double clipped = 0.0;
  for (std::size_t i = 0; i < tiw.size(); ++i) clipped += f[i] * tiw[i];
  return {plain, clipped};
}

RateCheckResult finish(std::string name, std::vector<std::size_t> grid, std::vector<double> err, double lo,
                       double hi) {
  RateCheckResult r;
  r.name = std::move(name);
  r.slope = loglog_slope(grid, err);
  r.pass = r.slope >= lo && r.slope <= hi;
  r.grid = std::move(grid);
  r.mean_abs_error = std::move(err);
  return r;
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

ClippingBoundResult check_clipping_bound(std::span<const double> f, std::span<const double> weights,
                                         std::size_t clip, double a) {
  if (f.size() != weights.size() || f.empty()) throw DimensionMismatch("f and weights must have equal nonzero length");
  if (!(a >= 1.0)) throw PreconditionError("weight box parameter must be >= 1");
  // small slack for weights generated exactly on the box edges
  const double eps = 1e-12;
  for (double w : weights)
    if (!(w >= (1.0 / a) * (1.0 - eps) && w <= a * (1.0 + eps)))
      throw PreconditionError("importance weight outside the [1/a, a] box");
  std::vector<double> log_w(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) log_w[i] = std::log(weights[i]);
  const auto est = weighted_estimates(f, log_w, clip);
  double fmax = 0.0;
  for (double v : f) fmax = std::max(fmax, std::abs(v));
  ClippingBoundResult r;
  r.lhs = std::abs(est.clipped - est.plain);
  r.rhs = 2.0 * a * a * fmax * static_cast<double>(clip) / static_cast<double>(weights.size());
  r.pass = r.lhs <= r.rhs;
  return r;
}

ClippingSweepResult clipping_bound_sweep(std::size_t trials, std::size_t samples, std::size_t clip, double a,
                                         std::uint64_t seed) {
  ClippingSweepResult out;
  out.trials = trials;
  std::vector<double> f(samples), w(samples);
  const double log_a = std::log(a);
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, {t}));
    for (std::size_t i = 0; i < samples; ++i) {
      f[i] = rng.uniform(-1.0, 1.0);
      w[i] = std::exp(rng.uniform(-log_a, log_a));
    }
    const auto r = check_clipping_bound(f, w, clip, a);
    if (!r.pass) ++out.failures;
    if (r.rhs > 0.0) out.worst_ratio = std::max(out.worst_ratio, r.lhs / r.rhs);
  }
  return out;
}

ReactionNetwork TwoStateToy::network() const {
  IntMatrix pre(2, 2), post(2, 2);
  pre << 1, 0, 0, 1;
  post << 0, 1, 1, 0;
  return ReactionNetwork("two_state_toy", {"A", "B"}, {"forward", "back"}, pre, post, {ConservationLaw{{1, 1}, 1}});
}

PriorSpec TwoStateToy::priors(double theta_lo, double theta_hi) const {
  PriorSpec p;
  p.theta_bounds = {{theta_lo, theta_hi}, {log_back_rate - 1.0, log_back_rate + 1.0}};
  p.x0_prior = CategoricalInitialPrior{{{1, 0}, {0, 1}}, {0.5, 0.5}};
  return p;
}

ObservationSet TwoStateToy::observations() const {
  ObservationSet obs;
  Eigen::MatrixXd m(1, 2);
  m << 1, 0;
  obs.model = ObservationModel{m, noise_variance};
  obs.delta = delta;
  obs.y.resize(static_cast<Eigen::Index>(y.size()), 1);
  for (std::size_t n = 0; n < y.size(); ++n) obs.y(static_cast<Eigen::Index>(n), 0) = y[n];
  return obs;
}

std::vector<double> TwoStateToy::full_theta(double theta) const { return {theta, log_back_rate}; }

double TwoStateToy::exact_likelihood(double theta) const {
  const double a = std::exp(theta), b = std::exp(log_back_rate);
  const double decay = 1.0 - std::exp(-(a + b) * delta);
  // state 0 = (A=1,B=0), state 1 = (A=0,B=1)
  const double p01 = a / (a + b) * decay, p10 = b / (a + b) * decay;
  const double trans[2][2] = {{1.0 - p01, p01}, {p10, 1.0 - p10}};
  const std::size_t N = y.size();
  auto obs_density = [&](std::size_t n, int s) {
    const double r = y[n] - (s == 0 ? 1.0 : 0.0);
    return std::exp(-0.5 * r * r / noise_variance) / std::sqrt(2.0 * M_PI * noise_variance);
  };
  double total = 0.0;
  // every path s_0..s_N, encoded in the bits of `code`
  for (std::uint64_t code = 0; code < (std::uint64_t{1} << (N + 1)); ++code) {
    int prev = static_cast<int>(code & 1);
    double p = 0.5;
    for (std::size_t n = 1; n <= N; ++n) {
      const int s = static_cast<int>((code >> n) & 1);
      p *= trans[prev][s] * obs_density(n - 1, s);
      prev = s;
    }
    total += p;
  }
  return total;
}

TwoStateToy TwoStateToy::make(std::size_t steps, std::uint64_t seed) {
  TwoStateToy toy;
  if (steps == 0) return toy;
  Rng rng(seed);
  const auto net = toy.network();
  const auto c = RateParams::from_log_rates(toy.full_theta(0.0)).c;
  const StateVector x0 = rng.uniform() < 0.5 ? StateVector{1, 0} : StateVector{0, 1};
  const auto traj = simulate_trajectory(net, c, x0, toy.delta, steps, rng);
  Eigen::MatrixXd m(1, 2);
  m << 1, 0;
  const auto obs = synthesize_observations(traj, ObservationModel{m, toy.noise_variance}, rng);
  for (Eigen::Index n = 0; n < obs.y.rows(); ++n) toy.y.push_back(obs.y(n, 0));
  return toy;
}

void RateCheckConfig::validate() const {
  if (grid.size() < 3) throw ConfigError("rate check grid needs at least 3 points");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (grid[i] <= grid[i - 1]) throw ConfigError("rate check grid must be strictly increasing");
  if (grid.front() < 4) throw ConfigError("rate check grid sizes must be >= 4");
  if (replicates < 50) throw ConfigError("rate check needs R >= 50 replicates");
  if (!(a > 1.0)) throw ConfigError("weight box parameter a must exceed 1");
  if (!(support > 0.0) || !(target_sd > 0.0) || !(proposal_scale > 0.0)) throw ConfigError("bad target/proposal");
  if (proposal_dof < 1.0 || proposal_dof != std::floor(proposal_dof))
    throw ConfigError("proposal degrees of freedom must be a positive integer");
}

IsRateResult check_is_rate(const RateCheckConfig& cfg) {
  cfg.validate();
  const double b = cfg.support;
  auto log_h = [&](double t) {
    const double z = (t - cfg.target_mean) / cfg.target_sd;
    return -0.5 * z * z;
  };
  auto log_q = [&](double t) {
    const double z = t / cfg.proposal_scale;
    return -0.5 * (cfg.proposal_dof + 1.0) * std::log1p(z * z / cfg.proposal_dof);
  };
  // Scale the weight function so its range is centred (geometrically) on 1,
  // then require it to fit the [1/a, a] box.
  double gmin = std::numeric_limits<double>::infinity(), gmax = -gmin;
  for (std::size_t i = 0; i <= 20000; ++i) {
    const double t = -b + 2.0 * b * static_cast<double>(i) / 20000.0;
    const double lg = log_h(t) - log_q(t);
    gmin = std::min(gmin, lg);
    gmax = std::max(gmax, lg);
  }
  const double log_scale = -0.5 * (gmin + gmax);
  if (0.5 * (gmax - gmin) > std::log(cfg.a))
    throw PreconditionError("importance weights violate the [1/a, a] box for this target/proposal pair");

  IsRateResult out;
  const double num = simpson([&](double t) { return sigmoid2(t) * std::exp(log_h(t)); }, -b, b, 200000);
  const double den = simpson([&](double t) { return std::exp(log_h(t)); }, -b, b, 200000);
  out.truth = num / den;

  std::vector<double> err_plain, err_clip;
  const int dof = static_cast<int>(cfg.proposal_dof);
  for (std::size_t M : cfg.grid) {
    const auto clip = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(M))));
    std::vector<double> plain(cfg.replicates), clipped(cfg.replicates);
    std::vector<double> theta(M), f(M), log_w(M);
    for (std::size_t r = 0; r < cfg.replicates; ++r) {
      Rng rng(derive_seed(cfg.seed, {M, r}));
      for (std::size_t i = 0; i < M; ++i) {
        double t;
        do {
          double chi2 = 0.0;
          for (int k = 0; k < dof; ++k) {
            const double z = rng.normal();
            chi2 += z * z;
          }
          t = cfg.proposal_scale * rng.normal() / std::sqrt(chi2 / cfg.proposal_dof);
        } while (std::abs(t) > b);
        theta[i] = t;
        f[i] = sigmoid2(t);
        log_w[i] = log_h(t) - log_q(t) + log_scale;
      }
      const auto est = weighted_estimates(f, log_w, clip);
      plain[r] = est.plain;
      clipped[r] = est.clipped;
    }
    double ep = 0.0, ec = 0.0;
    for (std::size_t r = 0; r < cfg.replicates; ++r) {
      ep += std::abs(plain[r] - out.truth);
      ec += std::abs(clipped[r] - out.truth);
    }
    err_plain.push_back(ep / static_cast<double>(cfg.replicates));
    err_clip.push_back(ec / static_cast<double>(cfg.replicates));
    if (M == cfg.grid.back()) {
      out.limit_gap = std::abs(mean(clipped) - mean(plain));
      out.limit_sd = stddev(plain);
      out.limit_pass = out.limit_gap < 3.0 * out.limit_sd;
    }
  }
  out.plain = finish("is_rate_plain", cfg.grid, err_plain, cfg.slope_lo, cfg.slope_hi);
  out.clipped = finish("is_rate_clipped", cfg.grid, err_clip, cfg.slope_lo, cfg.slope_hi);
  return out;
}

RateCheckResult check_pf_likelihood_rate(const PfRateConfig& cfg) {
  std::vector<double> grid = cfg.theta_grid;
  if (grid.empty())
    for (int g = 0; g < 20; ++g) grid.push_back(-1.0 + 2.0 * g / 19.0);
  const auto& toy = cfg.toy;
  if (toy.y.empty()) {
    // empty product: both likelihoods are exactly 1
    RateCheckResult r;
    r.name = "pf_likelihood_rate";
    r.grid = cfg.particle_grid;
    r.mean_abs_error.assign(cfg.particle_grid.size(), 0.0);
    r.slope = std::numeric_limits<double>::quiet_NaN();
    r.pass = true;
    return r;
  }
  const auto net = toy.network();
  const auto priors = toy.priors();
  const auto obs = toy.observations();
  std::vector<double> exact(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) exact[g] = toy.exact_likelihood(grid[g]);

  FilterOptions opt;
  opt.keep_paths = false;
  std::vector<double> err;
  for (std::size_t J : cfg.particle_grid) {
    double acc = 0.0;
    for (std::size_t r = 0; r < cfg.replicates; ++r) {
      double sup = 0.0;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const auto out = run_filter(net, toy.full_theta(grid[g]), priors, obs, J, derive_seed(cfg.seed, {J, r, g}), opt);
        sup = std::max(sup, std::abs(std::exp(out.log_marginal_likelihood) - exact[g]));
      }
      acc += sup;
    }
    err.push_back(acc / static_cast<double>(cfg.replicates));
  }
  return finish("pf_likelihood_rate", cfg.particle_grid, err, cfg.slope_lo, cfg.slope_hi);
}

IsRateResult check_nis_pf_rate(const NisPfRateConfig& cfg) {
  if (cfg.grid.size() < 3) throw ConfigError("rate check grid needs at least 3 points");
  const auto& toy = cfg.toy;
  const auto net = toy.network();
  const auto priors = toy.priors(cfg.theta_lo - 1.0, cfg.theta_hi + 1.0);
  const auto obs = toy.observations();

  IsRateResult out;
  // uniform prior on S, so the posterior is proportional to the likelihood
  const double num =
      simpson([&](double t) { return sigmoid2(t) * toy.exact_likelihood(t); }, cfg.theta_lo, cfg.theta_hi, 4000);
  const double den = simpson([&](double t) { return toy.exact_likelihood(t); }, cfg.theta_lo, cfg.theta_hi, 4000);
  out.truth = num / den;

  FilterOptions opt;
  opt.keep_paths = false;
  std::vector<double> err_plain, err_clip;
  for (std::size_t M : cfg.grid) {
    const std::size_t J = M;
    const auto clip = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(M))));
    std::vector<double> plain(cfg.replicates), clipped(cfg.replicates);
    std::vector<double> f(M), log_w(M);
    for (std::size_t r = 0; r < cfg.replicates; ++r) {
      Rng rng(derive_seed(cfg.seed, {M, r}));
      for (std::size_t i = 0; i < M; ++i) {
        double t;
        do {
          t = rng.normal(cfg.proposal_mean, cfg.proposal_sd);
        } while (t < cfg.theta_lo || t > cfg.theta_hi);
        const double z = (t - cfg.proposal_mean) / cfg.proposal_sd;
        const auto pf = run_filter(net, toy.full_theta(t), priors, obs, J, derive_seed(cfg.seed, {M, r, i, 1}), opt);
        f[i] = sigmoid2(t);
        // log lambda^J + log m0 - log q, constants dropped
        log_w[i] = pf.log_marginal_likelihood + 0.5 * z * z;
      }
      const auto est = weighted_estimates(f, log_w, clip);
      plain[r] = est.plain;
      clipped[r] = est.clipped;
    }
    double ep = 0.0, ec = 0.0;
    for (std::size_t r = 0; r < cfg.replicates; ++r) {
      ep += std::abs(plain[r] - out.truth);
      ec += std::abs(clipped[r] - out.truth);
    }
    err_plain.push_back(ep / static_cast<double>(cfg.replicates));
    err_clip.push_back(ec / static_cast<double>(cfg.replicates));
    if (M == cfg.grid.back()) {
      out.limit_gap = std::abs(mean(clipped) - mean(plain));
      out.limit_sd = stddev(plain);
      out.limit_pass = out.limit_gap < 3.0 * out.limit_sd;
    }
  }
  out.plain = finish("nis_pf_rate_plain", cfg.grid, err_plain, cfg.slope_lo, cfg.slope_hi);
  out.clipped = finish("nis_pf_rate_clipped", cfg.grid, err_clip, cfg.slope_lo, cfg.slope_hi);
  return out;
}

double loglog_slope(std::span<const std::size_t> n, std::span<const double> err) {
  if (n.size() != err.size() || n.size() < 2) throw PreconditionError("slope needs >= 2 matching points");
  const double k = static_cast<double>(n.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const double x = std::log(static_cast<double>(n[i])), y = std::log(err[i]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

nlohmann::json to_json(const RateCheckResult& r) {
  return {{"name", r.name}, {"grid", r.grid}, {"mean_abs_error", r.mean_abs_error},
          {"slope", std::isnan(r.slope) ? nlohmann::json(nullptr) : nlohmann::json(r.slope)}, {"pass", r.pass}};
}

nlohmann::json to_json(const IsRateResult& r) {
  return {{"truth", r.truth},         {"plain", to_json(r.plain)},   {"clipped", to_json(r.clipped)},
          {"limit_gap", r.limit_gap}, {"limit_sd", r.limit_sd},      {"limit_pass", r.limit_pass}};
}

}  // namespace skm::verify
