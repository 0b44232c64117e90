#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace polaron {

/// Stream-purpose tags; derived streams are Rng::derive(seed, purpose, index),
/// so the same master seed never feeds two different estimators the same
/// randomness.
enum StreamPurpose : std::uint64_t {
  kStreamClusterPool = 1,
  kStreamWeights = 2,
  kStreamWindows = 3,
  kStreamPaths = 4,
  kStreamOracle = 5,
  kStreamPoisson = 6,
  kStreamChecks = 7,
  kStreamRenewalPool = 8,
  kStreamSigma2 = 9,
  kStreamTerminal = 10,
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// xoshiro256++ generator with explicit distribution code, so results are
/// identical across standard libraries. Independent streams for parallel
/// replicas come from Rng::derive(master, replica, purpose): the indices are
/// hashed into the seed, no stream coordination needed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  static Rng derive(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t sm = master;
    std::uint64_t h = splitmix64(sm);
    sm ^= a * 0x9e3779b97f4a7c15ULL + h;
    h = splitmix64(sm);
    sm ^= b * 0xbf58476d1ce4e5b9ULL + h;
    return Rng(splitmix64(sm));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0,1]; safe as a log argument.
  double uniform_pos() { return 1.0 - uniform(); }

  /// Uniform integer in {0, ..., n-1}.
  std::uint64_t uniform_index(std::uint64_t n) {
    // 53-bit scaling: n is tiny compared to 2^53 everywhere we use this.
    auto k = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

  double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

  /// Standard normal via Box-Muller, one spare cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace polaron
