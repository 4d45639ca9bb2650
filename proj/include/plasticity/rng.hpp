#pragma once

// Seedable, splittable 64-bit random number generator.
//
// The generator is xoshiro256++ (Blackman & Vigna), seeded by expanding a
// 64-bit seed through the splitmix64 mixer. All sampling routines below are
// defined in terms of next_u64() only, so a (seed, call sequence) pair
// produces identical streams on every platform. Do not swap in std::
// distributions: their output is implementation-defined.

#include <cmath>
#include <cstdint>
#include <span>

namespace plasticity {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t x) {
  std::uint64_t s = x;
  return splitmix64(s);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}
}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) word = detail::splitmix64(s);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0,1) with 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Inverse-CDF exponential; log1p keeps the u->1 tail exact and u=0 finite.
  double next_exponential(double rate) { return -std::log1p(-next_unit()) / rate; }

  bool next_bernoulli(double p) { return next_unit() < p; }

  // Index into a nonnegative weight vector with a single uniform draw.
  // Cumulative walk in index order; rounding overshoot falls back to the
  // last positive weight.
  std::size_t next_index(std::span<const double> weights, double total) {
    double r = next_unit() * total;
    std::size_t last_positive = 0;
    bool seen = false;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const double w = weights[i];
      if (w > 0.0) {
        if (r < w) return i;
        r -= w;
        last_positive = i;
        seen = true;
      }
    }
    return seen ? last_positive : 0;
  }

  // Independent child stream; consumes one draw from the parent.
  Rng split() { return Rng(detail::mix64(next_u64())); }

  // Deterministic per-replicate stream, independent of how many replicates
  // run or in which order (used by the replicate worker pools).
  static Rng for_replicate(std::uint64_t base_seed, std::uint64_t replicate) {
    return Rng(detail::mix64(base_seed ^ (0x9E3779B97F4A7C15ULL * (replicate + 1))));
  }

 private:
  std::uint64_t state_[4];
};

}  // namespace plasticity
