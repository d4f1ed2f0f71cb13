#include "m2m/rng.hpp"

#include <cmath>
#include <limits>

#include "m2m/error.hpp"

namespace m2m {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double sample_laplace(double scale, Rng& rng) {
  if (!(scale >= 0.0) || std::isinf(scale)) {
    throw ValidationError("laplace scale must be finite and nonnegative");
  }
  if (scale == 0.0) {
    return 0.0;
  }
  // Inverse CDF on u in (-1/2, 1/2); u = -1/2 exactly is skipped so log stays finite.
  double u = 0.0;
  do {
    u = uniform01(rng) - 0.5;
  } while (u == -0.5);
  const double magnitude = -scale * std::log1p(-2.0 * std::abs(u));
  return u < 0.0 ? -magnitude : magnitude;
}

}  // namespace m2m
