#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

// Counter-based splittable RNG. Every stream is keyed by (seed, path index,
// mode index) through a splitmix64-style mix, so Monte Carlo output is
// independent of thread scheduling: a replica owns its streams and the n-th
// draw of a stream depends only on the key and n.

namespace qlab {

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t rng_key(std::uint64_t seed, std::uint64_t path,
                             std::uint64_t mode) {
  std::uint64_t k = mix64(seed ^ 0xD1B54A32D192ED03ull);
  k = mix64(k ^ mix64(path ^ 0x8CB92BA72F3D8DD7ull));
  k = mix64(k ^ mix64(mode ^ 0xA24BAED4963EE407ull));
  return k;
}

class CounterRng {
 public:
  CounterRng() : key_(0), counter_(0) {}
  explicit CounterRng(std::uint64_t key) : key_(key), counter_(0) {}
  CounterRng(std::uint64_t seed, std::uint64_t path, std::uint64_t mode)
      : key_(rng_key(seed, path, mode)), counter_(0) {}

  std::uint64_t next_u64() { return mix64(key_ + 0x9E3779B97F4A7C15ull * ++counter_); }

  // uniform in (0, 1)
  double next_unit() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // standard normal via Box-Muller (second value cached)
  double next_normal() {
    if (has_cache_) {
      has_cache_ = false;
      return cache_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    cache_ = r * std::sin(a);
    has_cache_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
  bool has_cache_ = false;
  double cache_ = 0.0;
};

}  // namespace qlab
