#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace skm {

/// Derives an independent stream seed from a master seed and a list of keys
/// (replicate, iteration, sample, particle, ...). Pure function of its inputs.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys);

/// Random source passed explicitly through every sampler.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The variate transforms below are written out rather than taken
/// from <random> distributions, whose algorithms are implementation-defined,
/// so a (seed, call sequence) pair produces the same numbers on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on (0, 1]; never returns 0.
  double uniform_open0() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }
  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Exponential waiting time with the given rate, -ln(U)/rate with U in (0,1].
  double exponential(double rate) { return -std::log(uniform_open0()) / rate; }
  /// Standard normal (Marsaglia polar method, second variate cached).
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  /// Poisson variate by sequential inversion.
  std::int64_t poisson(double mean);

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace skm
