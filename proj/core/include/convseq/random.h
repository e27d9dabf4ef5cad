#pragma once

#include <cstdint>
#include <random>

namespace convseq {

/// Mixes a 64-bit value; used to derive independent streams from a master seed.
std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic random source. mt19937_64 output is fixed by the standard, and
/// the real-valued draws below avoid the implementation-defined std distributions,
/// so sequences are reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Independent stream keyed by (master, a, b), e.g. (seed, purpose, iteration).
  static Rng stream(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace convseq
