#pragma once

// Deterministic random number streams.
//
// Every consumer of randomness gets its own stream derived from
// (seed, key1, key2) via splitmix64 mixing, so results do not depend on
// evaluation order or thread count. The generator is std::mt19937_64,
// which is fully specified by the standard, and the normal transform is
// the Marsaglia polar method implemented here, so identical seeds give
// identical draws on any platform. std::normal_distribution is avoided
// because its algorithm is implementation defined.

#include <cmath>
#include <cstdint>
#include <random>

namespace itsa {

// Name recorded in output metadata so runs can state what produced them.
inline constexpr const char* kRngName = "mt19937_64+polar";

// splitmix64 finalizer (Steele, Lea, Flood 2014 public domain constants).
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives a decorrelated stream seed from a base seed and up to two keys.
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t key1,
                               std::uint64_t key2 = 0) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ key1);
  h = mix64(h ^ key2);
  return h;
}

// Standard normal sampler with a cached spare deviate.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : engine_(seed) {}

  double operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

 private:
  // Uniform draw on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace itsa
