#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace s2q {

// Seeded random stream. All sampling in the library goes through this type so
// that runs are reproducible bit for bit on a given build: the conversions
// below avoid the implementation-defined std:: distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  int uniform_int(int n);

  bool bernoulli(double p) { return uniform() < p; }

  // Index drawn with probability proportional to weights (need not sum to 1).
  std::size_t categorical(std::span<const double> weights);

  // Independent child stream, reproducible from (this seed, stream id).
  Rng split(std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer; used to derive well-separated seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace s2q
