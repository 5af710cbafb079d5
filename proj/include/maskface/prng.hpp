#pragma once

#include <cstdint>

namespace maskface {

/// splitmix64. The stream depends only on the seed, so split, shuffle, flip
/// and dropout decisions reproduce on any platform.
class Prng {
 public:
  explicit Prng(std::uint64_t seed = 0) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 24 bits of resolution, exact in f32.
  float uniform() noexcept { return static_cast<float>(next() >> 40) * 0x1.0p-24f; }

  /// Uniform integer in [0, bound). Plain modulo reduction; bias is below
  /// 2^-40 for every bound this library uses.
  std::uint64_t below(std::uint64_t bound) noexcept { return next() % bound; }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace maskface
