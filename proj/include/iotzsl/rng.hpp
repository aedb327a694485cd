#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "iotzsl/mat.hpp"

namespace iotzsl {

// Deterministic PRNG (xoshiro256** seeded through splitmix64). All randomness
// in the library flows through this type so that runs are reproducible from a
// single recorded seed, independent of the standard library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& si : s_) si = splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    return n <= 1 ? 0 : static_cast<int>(next_u64() % static_cast<uint64_t>(n));
  }

  // Standard normal via Box-Muller (cosine branch only, so the draw count per
  // call is fixed).
  double gaussian() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = next_u64() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derives an independent stream, e.g. one per fold or per epoch.
  Rng fork(uint64_t stream) {
    uint64_t h = 0x9e3779b97f4a7c15ULL ^ stream;
    h ^= next_u64() + (h << 6) + (h >> 2);
    return Rng(h);
  }

 private:
  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t s_[4];
};

inline Mat randn(Rng& rng, int rows, int cols, double stddev = 1.0) {
  Mat m(rows, cols);
  for (size_t i = 0; i < m.size(); ++i) m[i] = stddev * rng.gaussian();
  return m;
}

inline Mat rand_uniform(Rng& rng, int rows, int cols, double lo, double hi) {
  Mat m(rows, cols);
  for (size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(lo, hi);
  return m;
}

}  // namespace iotzsl
