#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace sparsediff {

/// Deterministic RNG with named substreams derived from one master seed.
/// Stream derivation uses splitmix64 over (seed, fnv1a(name)), so changing
/// one module's stream never perturbs another's.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  static uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }

  static uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  /// Independent substream for a named module.
  static Rng stream(uint64_t master_seed, const std::string& name) {
    return Rng(splitmix64(master_seed ^ fnv1a(name)));
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  int64_t uniform_int(int64_t lo, int64_t hi_inclusive) {
    return std::uniform_int_distribution<int64_t>(lo, hi_inclusive)(engine_);
  }
  uint64_t next_u64() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sparsediff
