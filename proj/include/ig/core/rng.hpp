#pragma once

#include <cmath>
#include <cstdint>

namespace ig {

// splitmix64 with a Box-Muller gaussian on top. Every source of randomness in
// a run is an explicitly seeded Rng; no global state, no std::random_device.
// Identical seeds give identical streams on every platform we build for.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform double in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n), n > 0
  uint64_t below(uint64_t n) { return next_u64() % n; }

  // uniform integer in [lo, hi] inclusive
  int range(int lo, int hi) {
    return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo + 1)));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // standard normal; caches the second Box-Muller output
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.28318530717958647692528676655900577 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stable derivation of a child seed from a base seed and a stream/episode
// index. Used to fork named streams (data/noise/augment/...) from a run seed
// and per-episode seeds from a dataset seed.
inline uint64_t mix_seed(uint64_t base, uint64_t k) {
  uint64_t z = base ^ (0xD1B54A32D192ED03ull * (k + 1));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace ig
