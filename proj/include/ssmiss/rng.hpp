#pragma once

#include <cstdint>
#include <random>

namespace ssmiss {

using Rng = std::mt19937_64;

/// Stage tags keep the random streams of different pipeline stages apart.
enum class Stage : std::uint64_t {
  kSimulate = 1,
  kMissingness = 2,
  kCalibrate = 3,
  kMice = 4,
  kEm = 5,
  kFit = 6,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based seed derivation: every (master, cell, replication, stage,
/// sub) tuple gets its own independent stream, regardless of execution order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t cell,
                          std::uint64_t replication, Stage stage,
                          std::uint64_t sub = 0);

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace ssmiss
