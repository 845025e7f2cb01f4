#pragma once

#include <cstdint>
#include <random>

namespace trn {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream); seed_seq mixing is fully
/// specified by the standard, so streams are reproducible everywhere.
inline Rng seeded_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

}  // namespace trn
