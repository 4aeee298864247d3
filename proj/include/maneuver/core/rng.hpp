#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "maneuver/core/error.hpp"

namespace maneuver {

// splitmix64, used for seeding and for stateless coordinate hashing.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Deterministic PRNG (xoshiro256**). We avoid std:: distributions on purpose:
// their outputs are implementation-defined, and reproducibility across runs
// is part of the contract here. Every consumer derives an independent
// substream so that generation order never leaks between scenarios.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {
    uint64_t x = seed;
    for (auto& word : s_) {
      x = splitmix64(x);
      word = x;
    }
    // All-zero state is invalid for xoshiro; splitmix never emits four zero
    // words in a row from any seed, but keep the guard anyway.
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
  }

  uint64_t next_u64() {
    auto rotl = [](uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
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

  // Uniform double in [0, 1), 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is irrelevant at our n.
  uint64_t uniform_int(uint64_t n) {
    require(n > 0, "uniform_int: empty range");
    return next_u64() % n;
  }

  int64_t uniform_int(int64_t lo, int64_t hi_inclusive) {
    require(hi_inclusive >= lo, "uniform_int: inverted range");
    return lo + static_cast<int64_t>(uniform_int(static_cast<uint64_t>(hi_inclusive - lo + 1)));
  }

  // Standard normal via Box-Muller. The spare value is cached so the
  // consumed-stream length stays deterministic.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Fisher-Yates. Used everywhere an order is randomized so that shuffles
  // reproduce bit-for-bit from the seed.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(static_cast<uint64_t>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent child stream, derived from the original seed (not the
  // current state) so substream identity does not depend on how much the
  // parent stream has already been consumed.
  Rng substream(uint64_t id) const {
    return Rng(splitmix64(seed_ ^ splitmix64(id * 0x9E3779B97F4A7C15ULL + 0x5851F42D4C957F2DULL)));
  }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  uint64_t s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace maneuver
