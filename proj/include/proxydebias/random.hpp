#pragma once

#include <cstdint>
#include <random>

namespace proxydebias {

using Engine = std::mt19937_64;

// Independent streams from one user seed: data, test data, weights and
// shuffling each draw from their own engine.
enum class Stream : std::uint32_t { train_data = 1, test_data, weights, anchors, shuffle };

inline Engine make_engine(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Engine(seq);
}

}  // namespace proxydebias
