#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace mrlf {

// Deterministic PRNG (xoshiro-style splitmix64 core). All randomness in the
// project flows through this class so that a seed fully pins every run,
// independent of the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). n must be > 0.
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(uniform01() * static_cast<double>(n));
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Box-Muller, no spare caching so the draw count stays predictable.
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derives an independent stream, used to split init/shuffle/dropout noise.
  Rng fork(std::uint64_t salt) {
    return Rng(next_u64() ^ (0x632be59bd9b4e019ULL * (salt + 1)));
  }

 private:
  std::uint64_t state_;
};

}  // namespace mrlf
