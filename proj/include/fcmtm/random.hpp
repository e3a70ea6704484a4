#pragma once

#include <cstdint>

namespace fcmtm {

/// SplitMix64. Chosen over <random> distributions because its output, and
/// therefore every seeded initialization, is identical on every platform.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform in [-bound, bound).
  double symmetric(double bound) { return (2.0 * uniform() - 1.0) * bound; }

 private:
  std::uint64_t state_;
};

}  // namespace fcmtm
