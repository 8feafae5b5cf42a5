#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace fsga {

// Deterministic counter-free PRNG (SplitMix64 core, Box-Muller normals).
// All randomness in the toolkit flows through explicit Rng values; there is
// no global generator. Streams for distinct purposes are derived from
// (seed, purpose, step) so that enabling or disabling one consumer never
// shifts the draws seen by another.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(mix(seed ^ 0x9E3779B97F4A7C15ull)) {}

  // Independent stream for a named purpose at a given step.
  static Rng derive(uint64_t seed, std::string_view purpose, uint64_t step) {
    uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a over the purpose tag
    for (char c : purpose) {
      h ^= static_cast<uint8_t>(c);
      h *= 0x100000001B3ull;
    }
    return Rng(mix(seed + 0x9E3779B97F4A7C15ull * h) ^ mix(step + 0xBF58476D1CE4E5B9ull));
  }

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix(state_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n) {
    return static_cast<uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

  // Standard normal, Box-Muller with a cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  float normal_f() { return static_cast<float>(normal()); }

 private:
  static uint64_t mix(uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
  }

  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fsga
