#pragma once

#include <cmath>
#include <cstdint>

namespace gal {

// Deterministic splitmix64 generator. All randomness in the library flows
// through this type so that runs are bit-reproducible across platforms
// (std::uniform_real_distribution is implementation-defined, so we roll
// the distributions by hand).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller, one value per call (second value discarded
  // to keep the draw count independent of call pattern).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Derive an independent child stream. Streams for distinct tags do not
  // overlap for any practical draw count; stream k of seed s is the
  // splitmix64 sequence seeded with mix(s, k).
  Rng child(std::uint64_t tag) const {
    Rng mixer(state_ ^ (0xd1b54a32d192ed03ULL * (tag + 1)));
    return Rng(mixer.next_u64());
  }

 private:
  std::uint64_t state_;
};

}  // namespace gal
