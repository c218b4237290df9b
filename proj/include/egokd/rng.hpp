#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace egokd {

// Deterministic generator with a fully specified update (splitmix64), so
// streams are bit-identical across platforms and standard library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive range. Modulo bias is negligible for the small ranges used here.
  int uniform_int(int lo, int hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  double gaussian() {
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Rejection-sampled N(0, sigma) restricted to [-limit, limit].
  double truncated_gaussian(double sigma, double limit) {
    if (sigma == 0.0) return 0.0;
    for (;;) {
      const double g = gaussian() * sigma;
      if (std::abs(g) <= limit) return g;
    }
  }

 private:
  uint64_t state_;
};

inline uint64_t mix_u64(uint64_t h, uint64_t v) {
  uint64_t z = h + 0x9E3779B97F4A7C15ull + v;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// FNV-1a, used to fold identifiers into seed streams.
inline uint64_t hash_str(std::string_view s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t derive_seed(uint64_t base) { return mix_u64(base, 0); }

template <typename... Rest>
uint64_t derive_seed(uint64_t base, uint64_t v, Rest... rest) {
  return derive_seed(mix_u64(base, v), rest...);
}

template <typename... Rest>
uint64_t derive_seed(uint64_t base, std::string_view tag, Rest... rest) {
  return derive_seed(mix_u64(base, hash_str(tag)), rest...);
}

}  // namespace egokd
