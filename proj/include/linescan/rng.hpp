#pragma once

#include <cstdint>
#include <random>

namespace linescan {

// Seeded generator with a platform-independent output stream. The standard
// distributions are implementation-defined, so the mapping from raw 64-bit
// draws to reals and integers is done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [lo, hi) with 53 bits of resolution.
  double uniform(double lo, double hi);

  /// Uniform integer in [lo, hi] (inclusive), unbiased.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Derives an independent child seed; used to give each test instance its own stream.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t index);

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace linescan
