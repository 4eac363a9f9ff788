#pragma once

#include <cstdint>

#include "aptkit/gradcheck.hpp"

namespace aptkit {

// Ready-made gradient checks for the two trained attention paths. Each builds
// a random instance, differentiates a sum-of-squares readout of the tape
// mirror, and verifies the tape gradients against central differences of the
// plain (non-tape) forward implementation, so the two code paths cross-check
// each other.

// d-by-d single-head attention over n tokens with a p-row rank-r module;
// gradients wrt p_v, w1, w2 and the log of the output gate.
GradReport gradcheck_apt_attention(std::size_t n, std::size_t d, std::size_t p, std::size_t r,
                                   std::uint64_t seed, double eps = 1e-5,
                                   std::size_t coord_budget = 512);

// Joint prompt-extended attention (prompt rows first) read out at the input
// rows; gradients wrt the prompt block.
GradReport gradcheck_prompt_extension(std::size_t n, std::size_t d, std::size_t p,
                                      std::uint64_t seed, double eps = 1e-5,
                                      std::size_t coord_budget = 512);

}  // namespace aptkit
