#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace heml {

// splitmix64 finalizer; full avalanche on 64 bits.
constexpr std::uint64_t scramble64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from (seed, stream index).
// Distinct indices give distinct, reproducible streams.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return scramble64(seed ^ scramble64(stream + 0x9E3779B97F4A7C15ull));
}

// Deterministic PRNG (splitmix64). All randomness in the library flows
// through this generator so results are reproducible across platforms,
// unlike the unspecified std::normal_distribution.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    return scramble64(state_);
  }

  // Uniform in [0, 1), 53 random bits.
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [-1, 1).
  double next_symmetric() { return 2.0 * next_unit() - 1.0; }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return next() % n; }

  // Standard normal via Box-Muller; one spare value is cached.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_unit();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace heml
