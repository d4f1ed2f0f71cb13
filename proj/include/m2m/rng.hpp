#pragma once

#include <cstdint>
#include <random>

namespace m2m {

/// Every random consumer in the library draws from its own mt19937_64 stream
/// whose seed is derived from a user seed, so results never depend on call
/// order between unrelated consumers.
using Rng = std::mt19937_64;

/// SplitMix64 mixing of (base, stream); distinct streams give independent seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Uniform draw in [0, 1) built from the top 53 bits.
double uniform01(Rng& rng);

/// Centered Laplace draw with density exp(-|z|/scale) / (2 scale).
/// Scale 0 is the epsilon = infinity case and returns exactly 0. Infinite or
/// negative scales are rejected: an unbounded scale must never silently turn
/// into "no noise".
double sample_laplace(double scale, Rng& rng);

}  // namespace m2m
