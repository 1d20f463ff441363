#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tcmp {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Seedable generator with hand-rolled mappings so that a given seed produces
// the same stream on every platform (std::*_distribution is
// implementation-defined; std::mt19937_64 itself is not).
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed), base_seed_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of randomness.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive, bias-free via rejection.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return lo + static_cast<int64_t>(x % span);
  }

  // Standard normal via Box-Muller; the spare draw is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Deterministic child stream, used to key per-(epoch, batch, sample)
  // streams off one master seed.
  Rng child(uint64_t a, uint64_t b = 0, uint64_t c = 0) const {
    uint64_t h = splitmix64(base_seed_ ^ splitmix64(a));
    h = splitmix64(h ^ splitmix64(b + 0x517cc1b727220a95ull));
    h = splitmix64(h ^ splitmix64(c + 0x2545f4914f6cdd1dull));
    return Rng(h);
  }

  // Fisher-Yates shuffle.
  template <typename Vec>
  void shuffle(Vec& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  uint64_t seed() const { return base_seed_; }

 private:
  std::mt19937_64 engine_;
  uint64_t base_seed_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace tcmp
