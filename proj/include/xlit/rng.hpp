#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace xlit {

// Deterministic random source. All draws are derived from the raw mt19937_64
// stream with fixed arithmetic, so sequences are identical across platforms
// (std::*_distribution is implementation-defined and not used here).
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n). Rejection sampling, no modulo bias.
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t r = next_u64();
    while (r >= limit) r = next_u64();
    return r % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller without caching: two draws per sample, fixed draw order.
  double gaussian() {
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace xlit
