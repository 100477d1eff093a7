#pragma once

#include <cstdint>

namespace copem {

double std_normal_quantile(double u);  // numkernel.hpp

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  // splitmix64 finalizer
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-free xoshiro256++ stream.  Streams are values: callers that need
/// independent parallel streams derive them with substream(), which hashes the
/// parent seed with the stream ids, so results never depend on scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t z = seed;
    for (auto& si : s_) {
      z = detail::mix64(z);
      si = z;
    }
    // xoshiro must not start in the all-zero state
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[3] = 0x9e3779b97f4a7c15ULL;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform draw strictly inside (0,1): 53-bit mantissa offset by half an ulp.
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via the inverse cdf; deterministic on every platform,
  /// unlike std::normal_distribution.
  double next_normal() { return std_normal_quantile(next_uniform()); }

  /// Child stream keyed by (a, b); independent of how many draws the parent made.
  Rng substream(std::uint64_t a, std::uint64_t b = 0) const {
    std::uint64_t h = detail::mix64(s_[0] ^ 0x2545f4914f6cdd1dULL);
    h = detail::mix64(h ^ detail::mix64(a));
    h = detail::mix64(h ^ detail::mix64(b ^ 0x452821e638d01377ULL));
    return Rng(h);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

}  // namespace copem
