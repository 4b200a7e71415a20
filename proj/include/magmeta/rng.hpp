#pragma once

#include <cstdint>
#include <limits>

namespace magmeta {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Counter-based random stream.
///
/// Output i is a pure function of (key, i), so a stream can be recreated at
/// any position and streams for different keys never share state. Satisfies
/// UniformRandomBitGenerator, so it plugs into the <random> distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr Rng(std::uint64_t key, std::uint64_t counter = 0) noexcept
      : key_(mix64(key ^ 0x6A09E667F3BCC909ULL)), counter_(counter) {}

  /// Stream for one Monte Carlo replication. Independent of scheduling order.
  static constexpr Rng for_replication(std::uint64_t seed, std::uint64_t scenario,
                                       std::uint64_t rep) noexcept {
    return Rng(mix64(mix64(seed) ^ mix64(scenario + 0x9E3779B97F4A7C15ULL)) ^
               mix64(~rep));
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    return mix64(key_ + 0x9E3779B97F4A7C15ULL * ++counter_);
  }

  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace magmeta
