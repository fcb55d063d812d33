#pragma once

#include <cstdint>
#include <string_view>

namespace upv {

// SplitMix64 finalizer (Steele, Lea, Flood 2014). Pure 64-bit integer mixing,
// so the stream is identical on every platform for a given seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stateless variant: hash a single value through the same finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  std::uint64_t s = x;
  return splitmix64(s);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Deterministic PRNG used for every random decision in the library.
/// `derive(label)` produces an independent child stream that depends only on
/// (root seed, label), never on how many numbers the parent has drawn, so
/// pipeline stages can be re-run in isolation.
class seeded_rng {
 public:
  explicit seeded_rng(std::uint64_t seed) : root_(seed), state_(mix64(seed ^ 0x5bf0363546e92c1bULL)) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  float next_float() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

  /// Uniform integer in [0, n). Uses rejection to avoid modulo bias.
  std::uint32_t next_below(std::uint32_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return static_cast<std::uint32_t>(v % n);
  }

  /// Uniform in [lo, hi].
  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  seeded_rng derive(std::string_view label) const {
    return seeded_rng(mix64(root_ ^ mix64(fnv1a64(label))));
  }

  seeded_rng derive(std::string_view label, std::uint64_t index) const {
    return seeded_rng(mix64(root_ ^ mix64(fnv1a64(label)) ^ mix64(index * 0x9e3779b97f4a7c15ULL + 1)));
  }

  std::uint64_t root() const { return root_; }

 private:
  std::uint64_t root_;
  std::uint64_t state_;
};

}  // namespace upv
