#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace intentrec {

// mt19937_64 produces the same stream on every platform; the helpers below
// replace std::uniform_real_distribution and friends, whose output is
// implementation-defined.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream seed derived from a master seed and a stream tag.
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag));
}

// Uniform in [0,1) with 53 random bits.
inline double uniform01(Rng& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

// Uniform integer in [lo, hi].
inline int uniform_int(Rng& g, int lo, int hi) {
  const int span = hi - lo + 1;
  const int off = static_cast<int>(uniform01(g) * span);
  return lo + (off >= span ? span - 1 : off);
}

// Box-Muller; consumes two uniforms per call.
inline double normal(Rng& g) {
  double u1 = uniform01(g);
  const double u2 = uniform01(g);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Knuth's product-of-uniforms method; fine for small means.
inline int poisson(Rng& g, double mean) {
  if (mean <= 0.0) return 0;
  const double limit = std::exp(-mean);
  double prod = uniform01(g);
  int n = 0;
  while (prod > limit) {
    prod *= uniform01(g);
    ++n;
  }
  return n;
}

}  // namespace intentrec
