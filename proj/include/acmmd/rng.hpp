#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace acmmd {

// All randomness flows through std::mt19937_64, whose output sequence is fixed
// by the standard. Distributions are implemented here rather than taken from
// <random>, whose algorithms are implementation-defined.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Child seed for a (stream, index) path below `seed`. Used to give each
// bootstrap replicate, sweep cell, etc. its own independent generator so that
// results do not depend on evaluation order.
inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632BE59BD9B4E019ull));
  return h;
}

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path = {}) {
  return Rng(derive_seed(seed, path));
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng &rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n) by rejection, n > 0.
inline std::uint64_t uniform_index(Rng &rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

// Stream of Rademacher signs, 64 per generator call.
class RademacherStream {
public:
  explicit RademacherStream(Rng &rng) : rng_(rng) {}

  double next() {
    if (left_ == 0) {
      bits_ = rng_();
      left_ = 64;
    }
    const double s = (bits_ & 1u) ? 1.0 : -1.0;
    bits_ >>= 1;
    --left_;
    return s;
  }

private:
  Rng &rng_;
  std::uint64_t bits_ = 0;
  int left_ = 0;
};

} // namespace acmmd
