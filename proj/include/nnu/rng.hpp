#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace nnu {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t v, int k) {
  return (v << k) | (v >> (64 - k));
}

}  // namespace detail

// Deterministic generator: xoshiro256** seeded through splitmix64.
// Derived streams hash (origin, stream-id), so a dataset sample can own an
// independent stream keyed by its index and results never depend on the
// order samples are produced in.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : origin_(seed) {
    std::uint64_t sm = seed;
    for (auto& w : state_) w = detail::splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl64(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl64(state_[3], 45);
    return result;
  }

  // [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller without a cached spare: two uniforms per draw.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Unbiased integer in [0, n) via rejection.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t bound = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= bound) return r % n;
    }
  }

  // Independent stream keyed by (origin, stream). Derivation is pure hashing,
  // so it does not consume state from this generator.
  Rng derive(std::uint64_t stream) const {
    std::uint64_t t = origin_;
    const std::uint64_t h = detail::splitmix64(t);
    std::uint64_t t2 = h ^ (stream + 0x9e3779b97f4a7c15ULL);
    return Rng(detail::splitmix64(t2));
  }

  std::uint64_t origin() const { return origin_; }

 private:
  std::uint64_t origin_;
  std::uint64_t state_[4];
};

}  // namespace nnu
