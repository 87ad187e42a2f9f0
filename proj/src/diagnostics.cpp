#include "skm/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "skm/errors.hpp"

namespace skm {

double mse_chain(const std::vector<std::vector<double>>& samples, double truth, std::size_t k) {
  if (samples.empty()) throw PreconditionError("mse_chain needs at least one sample");
  double acc = 0.0;
  for (const auto& s : samples) {
    const double e = s.at(k) - truth;
    acc += e * e;
  }
  return acc / static_cast<double>(samples.size());
}

double mse_moments(double mean, double variance, double truth) {
  if (variance < 0.0) throw PreconditionError("variance must be >= 0");
  return (mean - truth) * (mean - truth) + variance;
}

double prior_mse_uniform(double lo, double hi, double truth) {
  if (!(lo < hi)) throw PreconditionError("need lo < hi");
  const double mid = 0.5 * (lo + hi);
  return (hi - lo) * (hi - lo) / 12.0 + (mid - truth) * (mid - truth);
}

std::vector<double> acf_series(std::span<const double> x, std::size_t max_lag) {
  const std::size_t n = x.size();
  if (max_lag >= n) throw PreconditionError("acf: chain length must exceed max_lag");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double c0 = 0.0;
  for (double v : x) c0 += (v - mean) * (v - mean);
  if (!(c0 > 0.0)) throw PreconditionError("acf undefined for a constant chain");
  std::vector<double> rho(max_lag + 1);
  for (std::size_t j = 0; j <= max_lag; ++j) {
    double c = 0.0;
    for (std::size_t i = 0; i + j < n; ++i) c += (x[i] - mean) * (x[i + j] - mean);
    rho[j] = c / c0;
  }
  return rho;
}

std::vector<double> acf(const std::vector<std::vector<double>>& chain, std::size_t max_lag) {
  if (chain.empty()) throw PreconditionError("acf: empty chain");
  const std::size_t d = chain.front().size();
  std::vector<double> avg(max_lag + 1, 0.0);
  std::vector<double> series(chain.size());
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < chain.size(); ++i) series[i] = chain[i][k];
    const auto rho = acf_series(series, max_lag);
    for (std::size_t j = 0; j <= max_lag; ++j) avg[j] += rho[j] / static_cast<double>(d);
  }
  return avg;
}

double ness_from_acf(std::span<const double> rho, double floor) {
  double sum = 0.0;
  for (std::size_t j = 1; j < rho.size(); ++j) {
    if (rho[j] < 0.1) break;
    sum += rho[j];
  }
  const double ness = 1.0 / (1.0 + 2.0 * sum);
  return std::clamp(ness, floor, 1.0);
}

double ness_mcmc(const std::vector<std::vector<double>>& chain) {
  if (chain.size() < 2) throw PreconditionError("ness_mcmc needs at least two samples");
  const auto rho = acf(chain, chain.size() - 1);
  return ness_from_acf(rho, 1.0 / static_cast<double>(chain.size()));
}

double ness_is(std::span<const double> weights) {
  if (weights.empty()) throw PreconditionError("ness_is: no weights");
  double ss = 0.0;
  for (double w : weights) ss += w * w;
  return 1.0 / (static_cast<double>(weights.size()) * ss);
}

}  // namespace skm
