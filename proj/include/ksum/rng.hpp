#pragma once

#include "ksum/common.hpp"

// Counter-based deterministic random values. Every draw is a pure function
// of (seed, counter) through the splitmix64 finalizer, so sequences are
// reproducible across platforms and independent of call order.

namespace ksum::rng {

inline u64 splitmix64(u64 x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Uniform draw for counter n under the given seed.
inline u64 hash2(u64 seed, u64 n) { return splitmix64(seed ^ splitmix64(n + 0x517cc1b727220a95ull)); }

/// Top 53 bits as a double in [0, 1).
inline double unit_double(u64 bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Uniform double in [-1, 1).
inline double symmetric_double(u64 bits) { return 2.0 * unit_double(bits) - 1.0; }

/// Cheap sequential stream for parameter sampling (a, b, N, ... draws).
class Stream {
 public:
  explicit Stream(u64 seed) : state_(seed) {}

  u64 next() { return splitmix64(state_++); }

  /// Uniform in [0, bound) by rejection; bound > 0.
  u64 below(u64 bound) {
    const u64 limit = ~u64(0) - ~u64(0) % bound;
    for (;;) {
      const u64 v = next();
      if (v < limit) return v % bound;
    }
  }

  /// Uniform in [lo, hi] inclusive.
  u64 range(u64 lo, u64 hi) { return lo + below(hi - lo + 1); }

 private:
  u64 state_;
};

} // namespace ksum::rng
