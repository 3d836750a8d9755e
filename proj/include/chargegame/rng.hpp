#pragma once

#include <cstdint>

namespace chargegame {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: draw k of stream s under key `seed` is a pure
/// function of (seed, s, k), so results never depend on call order.
class CounterRng {
 public:
  constexpr CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(mix64(mix64(seed) ^ stream)) {}

  constexpr std::uint64_t bits(std::uint64_t counter) const { return mix64(key_ ^ mix64(counter)); }

  /// Uniform on [0, 1).
  constexpr double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  constexpr double uniform(std::uint64_t counter, double lo, double hi) const {
    return lo + (hi - lo) * uniform(counter);
  }

  /// Uniform integer in [lo, hi].
  constexpr long uniform_int(std::uint64_t counter, long lo, long hi) const {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<long>(bits(counter) % span);
  }

 private:
  std::uint64_t key_;
};

/// Derives a child seed from a parent seed and a list of integer labels.
template <typename... Labels>
constexpr std::uint64_t derive_seed(std::uint64_t seed, Labels... labels) {
  std::uint64_t h = mix64(seed);
  ((h = mix64(h ^ static_cast<std::uint64_t>(labels))), ...);
  return h;
}

}  // namespace chargegame
