#pragma once

#include <cstdint>
#include <limits>

namespace csmatch {

// Counter-based pseudo-random stream.
//
// Output i is splitmix64_finalize(base + (i+1) * golden_gamma), so the state
// is just (base, counter): the sequence is fixed by the algorithm alone and
// reproduces bit-exactly on any platform. Streams are derived by hashing
// (seed, stream) into the base, which gives each replication its own
// statistically independent sequence without coordination.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}

  RngStream(std::uint64_t seed, std::uint64_t stream)
      : base_(mix64(seed + kGamma) ^ mix64((stream + 1) * 0xd2b74407b1ce6e93ULL)),
        counter_(0) {}

  std::uint64_t seed_base() const { return base_; }
  std::uint64_t draws() const { return counter_; }

  std::uint64_t next_u64() { return mix64(base_ + (++counter_) * kGamma); }

  // Uniform double in [0, 1), 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased uniform integer in [0, bound); bound must be > 0.
  // Multiply-shift with rejection (Lemire 2019).
  std::uint32_t next_below(std::uint32_t bound) {
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(static_cast<std::uint32_t>(x)) * bound;
    auto lo = static_cast<std::uint32_t>(m);
    if (lo < bound) {
      std::uint32_t threshold = (0u - bound) % bound;
      while (lo < threshold) {
        x = next_u64();
        m = static_cast<__uint128_t>(static_cast<std::uint32_t>(x)) * bound;
        lo = static_cast<std::uint32_t>(m);
      }
    }
    return static_cast<std::uint32_t>(m >> 32);
  }

  std::uint64_t next_below_u64(std::uint64_t bound) {
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * bound;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < bound) {
      std::uint64_t threshold = (0ULL - bound) % bound;
      while (lo < threshold) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * bound;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  std::uint64_t base_;
  std::uint64_t counter_;
};

}  // namespace csmatch
