#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace sparn {

/// Seeded generator with platform-independent uniform and normal draws
/// (std::*_distribution output differs between standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; caches the second variate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Index drawn from a discrete distribution given as probabilities.
  template <class Probs>
  std::size_t categorical(const Probs& probs) {
    const double u = uniform();
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t k = 0; k < static_cast<std::size_t>(probs.size()); ++k) {
      if (probs[k] <= 0.0) continue;
      acc += probs[k];
      last = k;
      if (u < acc) return k;
    }
    return last;
  }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Seed for a sub-stream (block, component, ...). derive(seed, 0) == seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return seed ^ (stream * 0x9E3779B97F4A7C15ull);
}

}  // namespace sparn
