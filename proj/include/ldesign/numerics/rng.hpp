#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace ldesign::numerics {

/// Counter-based splittable RNG. A stream is identified by (seed, substream
/// name); each draw hashes (key, counter) through a SplitMix64-style mixer,
/// so identical seed + substream always reproduces the same sequence and
/// substreams derived from different names are independent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  /// Derive an independent named substream. Deterministic in (this, name).
  Rng substream(std::string_view name) const {
    Rng r(0);
    r.key_ = mix(key_ ^ fnv1a(name));
    r.counter_ = 0;
    return r;
  }

  /// Derive an independent substream by index (e.g. per training step).
  Rng substream(std::uint64_t index) const {
    Rng r(0);
    r.key_ = mix(key_ ^ mix(index + 0x2545f4914f6cdd1dull));
    r.counter_ = 0;
    return r;
  }

  std::uint64_t next_u64() {
    return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ull);
  }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ldesign::numerics
