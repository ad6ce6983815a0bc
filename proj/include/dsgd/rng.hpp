#pragma once

#include <cmath>
#include <cstdint>

// Counter-based random streams. Every variate is a pure function of
// (seed, domain, node, iteration, draw, index), so gradient evaluation can be
// reordered or parallelized across nodes and still reproduce the sequential
// results bit for bit.

namespace dsgd {

/// Stream domains keep unrelated uses of the same (seed, node, iteration)
/// triple statistically independent.
enum class StreamDomain : std::uint64_t {
  gradient_noise = 1,
  dataset = 2,
  sample_pick = 3,
  estimator = 4,
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t counter_hash(std::uint64_t seed, StreamDomain domain,
                                     std::uint64_t node, std::uint64_t iteration,
                                     std::uint64_t draw, std::uint64_t index) {
  std::uint64_t h = mix64(seed ^ 0x8f1bbcdcbfa53e0bULL);
  h = mix64(h ^ static_cast<std::uint64_t>(domain));
  h = mix64(h ^ node);
  h = mix64(h ^ iteration);
  h = mix64(h ^ draw);
  h = mix64(h ^ index);
  return h;
}

/// Uniform double in the open interval (0, 1).
inline double uniform01_from_bits(std::uint64_t bits) {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

inline double uniform01(std::uint64_t seed, StreamDomain domain, std::uint64_t node,
                        std::uint64_t iteration, std::uint64_t draw, std::uint64_t index) {
  return uniform01_from_bits(counter_hash(seed, domain, node, iteration, draw, index));
}

/// Standard normal deviate via Box-Muller; consumes counters 2*index and
/// 2*index + 1 of the stream.
inline double gaussian(std::uint64_t seed, StreamDomain domain, std::uint64_t node,
                       std::uint64_t iteration, std::uint64_t draw, std::uint64_t index) {
  const double u1 = uniform01(seed, domain, node, iteration, draw, 2 * index);
  const double u2 = uniform01(seed, domain, node, iteration, draw, 2 * index + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

/// Uniform integer in [0, bound). Modulo bias is negligible for bound << 2^64.
inline std::uint64_t uniform_below(std::uint64_t seed, StreamDomain domain, std::uint64_t node,
                                   std::uint64_t iteration, std::uint64_t draw,
                                   std::uint64_t index, std::uint64_t bound) {
  return counter_hash(seed, domain, node, iteration, draw, index) % bound;
}

}  // namespace dsgd
