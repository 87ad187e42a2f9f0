#include "skm/random.hpp"

#include <cmath>
#include <stdexcept>

namespace skm {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  cached_normal_ = v * f;
  has_cached_normal_ = true;
  return u * f;
}

std::int64_t Rng::poisson(double mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw std::invalid_argument("poisson: mean must be finite and >= 0");
  if (mean == 0.0) return 0;
  if (mean < 500.0) {
    // Inversion from the mode keeps the search short and exp() from underflowing.
    const auto mode = static_cast<std::int64_t>(std::floor(mean));
    const double log_pmode = static_cast<double>(mode) * std::log(mean) - mean - std::lgamma(static_cast<double>(mode) + 1.0);
    const double pmode = std::exp(log_pmode);
    double u = uniform();
    // Walk outward from the mode alternately down and up.
    double p_lo = pmode, p_hi = pmode;
    std::int64_t lo = mode, hi = mode;
    u -= pmode;
    if (u < 0.0) return mode;
    while (true) {
      if (lo > 0) {
        p_lo *= static_cast<double>(lo) / mean;
        --lo;
        u -= p_lo;
        if (u < 0.0) return lo;
      }
      ++hi;
      p_hi *= mean / static_cast<double>(hi);
      u -= p_hi;
      if (u < 0.0) return hi;
      if (lo == 0 && p_hi < 1e-300) return hi;
    }
  }
  // Normal approximation with continuity correction; only reached for means far
  // outside the population scales this library deals with.
  const double x = std::floor(mean + std::sqrt(mean) * normal() + 0.5);
  return x < 0.0 ? 0 : static_cast<std::int64_t>(x);
}

}  // namespace skm
