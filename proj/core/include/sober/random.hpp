#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace sober {

/// Deterministic random source. All draws are derived from raw mt19937_64
/// output with fixed arithmetic, so seeded sequences are reproducible across
/// platforms and standard-library implementations (std::*_distribution is
/// implementation-defined and would break the bit-identical contract).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; pairs are cached.
  double normal();

  /// Uniform integer in [0, bound). bound must be positive.
  std::size_t index(std::size_t bound);

  /// Draw from a finite distribution given non-negative weights (unnormalized).
  std::size_t categorical(const std::vector<double>& weights);

  /// Fisher-Yates shuffle of an index vector.
  void shuffle(std::vector<std::size_t>& items);

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives an independent child seed from a base seed and stream labels
/// (splitmix64 finalizer). Used to give every sub-procedure its own stream.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

}  // namespace sober
