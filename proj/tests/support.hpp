#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "skm/random.hpp"
#include "skm/sampling_target.hpp"

namespace skm::testing {

/// Gaussian likelihood N(y; theta, sd^2 I) under a wide uniform prior, so the
/// posterior is N(y, sd^2 I) up to negligible truncation. With noise_sd > 0
/// the likelihood estimate is multiplied by an independent mean-one
/// log-normal factor, which keeps it unbiased.
class GaussianToyTarget final : public SamplingTarget {
 public:
  GaussianToyTarget(std::vector<double> y, double sd, double noise_sd = 0.0, double half_width = 10.0)
      : y_(std::move(y)), sd_(sd), noise_sd_(noise_sd), half_width_(half_width) {}

  std::size_t dim() const override { return y_.size(); }
  double log_prior(std::span<const double> theta) const override {
    for (double t : theta)
      if (!(t > -half_width_ && t < half_width_)) return -std::numeric_limits<double>::infinity();
    return -static_cast<double>(theta.size()) * std::log(2.0 * half_width_);
  }
  std::vector<double> sample_prior(Rng& rng) const override {
    std::vector<double> t(y_.size());
    for (auto& v : t) v = rng.uniform(-half_width_, half_width_);
    return t;
  }
  LikelihoodEstimate estimate_likelihood(std::span<const double> theta, std::uint64_t seed, bool) const override {
    double ll = 0.0;
    for (std::size_t i = 0; i < y_.size(); ++i) {
      const double z = (y_[i] - theta[i]) / sd_;
      ll += -0.5 * z * z - std::log(sd_) - 0.5 * std::log(2.0 * M_PI);
    }
    if (noise_sd_ > 0.0) {
      Rng rng(seed);
      ll += noise_sd_ * rng.normal() - 0.5 * noise_sd_ * noise_sd_;
    }
    return {ll, std::nullopt};
  }

 private:
  std::vector<double> y_;
  double sd_;
  double noise_sd_;
  double half_width_;
};

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace skm::testing
