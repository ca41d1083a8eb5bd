#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dmar {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Stable seed derivation for independent sub-streams (folds, replications,
// estimators). Never feed raw consecutive integers to parallel streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag0, std::uint64_t tag1 = 0) {
  std::uint64_t s = base;
  std::uint64_t h = splitmix64(s);
  s ^= tag0 * 0x9E3779B97F4A7C15ull + 0x165667B19E3779F9ull;
  h ^= splitmix64(s);
  s ^= tag1 * 0xD1B54A32D192ED03ull + 0x2545F4914F6CDD1Dull;
  h ^= splitmix64(s);
  return h;
}

// Deterministic random stream. The raw engine output is the
// standard-specified mt19937_64 sequence; every variate transform is
// implemented here (not via std distributions, whose algorithms are
// implementation-defined) so results are reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // uniform on (0,1), never exactly 0 or 1
  double uniform01() { return (static_cast<double>(next_u64() >> 11) + 0.5) * kInv53; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = kTwoPi * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  // standard normal conditioned on |Z| < bound, by rejection
  double truncated_normal(double bound) {
    for (;;) {
      const double z = normal();
      if (z > -bound && z < bound) return z;
    }
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // unbiased uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t x = next_u64();
      if (x >= threshold) return x % n;
    }
  }

 private:
  static constexpr double kInv53 = 1.0 / 9007199254740992.0;  // 2^-53
  static constexpr double kTwoPi = 6.283185307179586476925287;
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace dmar
