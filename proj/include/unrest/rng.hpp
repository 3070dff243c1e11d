#pragma once

#include <cstdint>
#include <random>

namespace unrest {

/// Portable seeded generator.
///
/// Bits come from std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The standard distributions are implementation-defined, so the
/// uniform, integer and Gaussian draws are derived here from raw 64-bit
/// outputs. Same seed, same numbers, on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via the Box-Muller transform.
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace unrest
