#pragma once

#include <cstdint>
#include <random>

namespace seisfrag {

using RandomStream = std::mt19937_64;

// Purpose tags keep streams for different consumers of the same index apart.
enum class StreamPurpose : std::uint64_t {
  kScenario = 1,
  kNoise = 2,
  kBootstrap = 3,
  kTest = 4,
};

std::uint64_t splitmix64(std::uint64_t x);

// Seed for the stream owned by (master_seed, index, purpose). Independent of
// evaluation order, so records and replications can be processed in parallel.
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index, StreamPurpose purpose);

RandomStream make_stream(std::uint64_t seed);

}  // namespace seisfrag
