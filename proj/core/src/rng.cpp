#include "s2q/rng.hpp"

#include "s2q/errors.hpp"

namespace s2q {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

int Rng::uniform_int(int n) {
  if (n <= 0) throw UsageError("Rng::uniform_int: n must be positive");
  // Lemire's multiply-shift; the bias for n < 2^32 is below 2^-32.
  const std::uint64_t x = engine_() >> 32;
  return static_cast<int>((x * static_cast<std::uint64_t>(n)) >> 32);
}

std::size_t Rng::categorical(std::span<const double> weights) {
  if (weights.empty()) throw UsageError("Rng::categorical: empty weights");
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw UsageError("Rng::categorical: weights sum to zero");
  const double toss = uniform() * total;
  double cumulative = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    cumulative += weights[i];
    if (toss < cumulative) return i;
  }
  // Rounding can leave toss == total; return the last positive entry.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return weights.size() - 1;
}

Rng Rng::split(std::uint64_t stream) { return Rng(mix_seed(engine_(), stream)); }

}  // namespace s2q
