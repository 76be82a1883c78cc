#pragma once

#include <cstdint>
#include <random>

namespace saco::core {

// Components that draw randomness. Each gets its own stream derived from the
// root seed so adding draws in one place never shifts another.
enum class Stream : std::uint64_t {
  kShuffle = 1,
  kPositive = 2,
  kNegative = 3,
  kCorruptStyle = 4,
  kScstSample = 5,
  kRandomPairs = 6,
  kSynthetic = 7,
};

inline std::mt19937_64 stream_rng(std::uint64_t seed, Stream stream, std::uint64_t a = 0,
                                  std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(a),
                    static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace saco::core
