#pragma once

#include <cstdint>
#include <random>

#include "aptkit/matrix.hpp"

namespace aptkit {

using Rng = std::mt19937_64;

// Splitmix64 step; used to derive independent seeds for named substreams so
// that e.g. dataset sampling and weight init never share a stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

Rng seeded_rng(std::uint64_t seed);

Matrix random_normal(std::size_t r, std::size_t c, Rng& rng, double mean = 0.0,
                     double stddev = 1.0);
Matrix random_uniform(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0,
                      double hi = 1.0);

}  // namespace aptkit
