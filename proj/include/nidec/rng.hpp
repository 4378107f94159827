#ifndef NIDEC_RNG_HPP
#define NIDEC_RNG_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

#include "nidec/error.hpp"
#include "nidec/numeric.hpp"

namespace nidec {

/// xoshiro256** seeded through splitmix64.
///
/// All derived samplers (uniform doubles, bounded integers, signs, shuffles)
/// are implemented here rather than through <random> distributions, whose
/// output is implementation-defined. Same seed, same stream, on any platform.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi].
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Unbiased integer in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw Error("SeededRng::below: bound must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % bound;
  }

  /// Independent uniform +-1.
  double sign() { return (next_u64() >> 63) != 0 ? 1.0 : -1.0; }

  /// Standard normal via Box-Muller (no cached second sample).
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Fisher-Yates.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t state_[4];
};

/// Default initialization bound for weight matrices.
inline constexpr double kInitBound = 0.054;

/// rows x cols matrix with entries drawn from U(-bound, bound).
inline Mat init_uniform(SeededRng& rng, std::size_t rows, std::size_t cols, double bound = kInitBound) {
  if (!(bound > 0.0)) throw Error("init_uniform: bound must be positive");
  Mat m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return m;
}

inline void fill_uniform(SeededRng& rng, MutSpan out, double bound = kInitBound) {
  for (double& v : out) v = rng.uniform(-bound, bound);
}

}  // namespace nidec

#endif  // NIDEC_RNG_HPP
