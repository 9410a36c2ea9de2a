// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_RANDOM_HPP_
#define TSEGRID_RANDOM_HPP_

#include <cmath>
#include <cstdint>
#include <string_view>

namespace tsegrid {

// Deterministic RNG with a fixed cross-platform bit stream. std::mt19937
// would do for the engine, but the std distributions are implementation
// defined, so both the engine (splitmix64) and the mappings are spelled out
// here. Everything seeded from (master seed, purpose tag, indices) so that
// independent streams never alias.

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t seed, std::string_view tag, uint64_t a = 0,
                         uint64_t b = 0) {
  uint64_t s = seed;
  for (char c : tag) {
    s ^= static_cast<uint64_t>(static_cast<unsigned char>(c));
    splitmix64(s);
  }
  s ^= 0x632be59bd9b4e019ULL + a;
  splitmix64(s);
  s ^= 0x9e6c63d0876a9a35ULL + b;
  splitmix64(s);
  return s;
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {
    // warm up so nearby seeds decorrelate
    splitmix64(state_);
    splitmix64(state_);
  }

  uint64_t next_u64() { return splitmix64(state_); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  uint64_t uniform_int(uint64_t n) {
    // modulo bias is irrelevant at these pool sizes
    return next_u64() % n;
  }

  // standard normal via Box-Muller (cos branch only, deterministic)
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  uint64_t state_;
};

}  // namespace tsegrid

#endif  // TSEGRID_RANDOM_HPP_
