#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "skm/random.hpp"

namespace skm {

/// Draws `count` i.i.d. categorical indices with probabilities `weights`
/// (normalized). Inverse CDF against an ordered batch of uniforms, generated
/// in O(count) from normalized exponential spacings.
inline std::vector<std::size_t> multinomial_indices(std::span<const double> weights, std::size_t count, Rng& rng) {
  std::vector<std::size_t> out(count);
  if (count == 0) return out;
  std::vector<double> spacing(count + 1);
  double total = 0.0;
  for (auto& e : spacing) {
    e = rng.exponential(1.0);
    total += e;
  }
  double cum_w = 0.0;
  double cum_u = 0.0;
  std::size_t j = 0;
  const std::size_t last = weights.size() - 1;
  for (std::size_t i = 0; i < count; ++i) {
    cum_u += spacing[i];
    const double u = cum_u / total;
    while (j < last && cum_w + weights[j] <= u) cum_w += weights[j++];
    // never land on a zero-weight tail entry through rounding
    std::size_t pick = j;
    while (weights[pick] <= 0.0 && pick > 0) --pick;
    out[i] = pick;
  }
  return out;
}

/// Normalizes log-weights with a max shift. Returns log of the mean of the
/// unnormalized weights, or -inf when every weight is zero.
inline double normalize_log_weights(std::span<const double> log_w, std::span<double> w) {
  double m = -std::numeric_limits<double>::infinity();
  for (double lw : log_w)
    if (lw > m) m = lw;
  if (!(m > -std::numeric_limits<double>::infinity()) || std::isnan(m)) {
    for (auto& x : w) x = 0.0;
    return -std::numeric_limits<double>::infinity();
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    w[i] = std::exp(log_w[i] - m);
    sum += w[i];
  }
  for (auto& x : w) x /= sum;
  return m + std::log(sum) - std::log(static_cast<double>(log_w.size()));
}

}  // namespace skm
