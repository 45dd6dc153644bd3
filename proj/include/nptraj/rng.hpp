#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace nptraj {

// Seeded random source. Distributions are computed here from raw
// mt19937_64 output rather than through <random> distribution classes,
// whose algorithms are implementation-defined, so streams are identical
// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  double normal(double mean, double std) { return mean + std * normal(); }
  std::vector<double> normal_vector(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  // Independent child stream, deterministic in (this stream's state).
  Rng split() { return Rng(engine_() ^ 0x9e3779b97f4a7c15ULL); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace nptraj
