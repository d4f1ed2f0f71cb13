#include "m2m/feature_map.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "m2m/error.hpp"
#include "m2m/rng.hpp"
#include "m2m/serialize.hpp"

namespace m2m {
namespace {

void check_finite(std::span<const double> x) {
  for (const double v : x) {
    if (!std::isfinite(v)) {
      throw ValidationError("cannot embed a point with non-finite coordinates");
    }
  }
}

}  // namespace

std::string to_string(MapKind kind) {
  switch (kind) {
    case MapKind::Hist: return "hist";
    case MapKind::Rff: return "rff";
    case MapKind::Race: return "race";
  }
  return "unknown";
}

MapKind map_kind_from_string(const std::string& name) {
  if (name == "hist" || name == "HIST") return MapKind::Hist;
  if (name == "rff" || name == "RFF") return MapKind::Rff;
  if (name == "race" || name == "RACE") return MapKind::Race;
  throw ValidationError("unknown feature map '" + name + "' (expected hist, rff or race)");
}

FeatureMap FeatureMap::hist(Domain domain, std::size_t n_bins) {
  if (n_bins == 0) {
    throw ValidationError("HIST needs at least one bin per attribute");
  }
  FeatureMap map;
  map.kind_ = MapKind::Hist;
  map.domain_ = std::move(domain);
  map.n_bins_ = n_bins;
  map.m_ = map.domain_.dim() * n_bins;
  map.finalize();
  return map;
}

FeatureMap FeatureMap::rff(Domain domain, std::size_t m, double sigma, std::uint64_t seed) {
  if (m == 0 || m % 2 != 0) {
    throw ValidationError("RFF sketch size m must be a positive even number, got " + std::to_string(m));
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ValidationError("RFF bandwidth sigma must be positive");
  }
  const auto d = static_cast<Eigen::Index>(domain.dim());
  const auto half = static_cast<Eigen::Index>(m / 2);
  Rng rng(derive_seed(seed, 0x5246'46));
  std::normal_distribution<double> normal;
  Eigen::MatrixXd freqs(d, half);
  for (Eigen::Index c = 0; c < half; ++c) {
    for (Eigen::Index r = 0; r < d; ++r) {
      freqs(r, c) = normal(rng) / sigma;
    }
  }
  return rff_from_frequencies(std::move(domain), std::move(freqs), sigma, seed);
}

FeatureMap FeatureMap::rff_from_frequencies(Domain domain, Eigen::MatrixXd frequencies, double sigma,
                                            std::uint64_t seed) {
  if (static_cast<std::size_t>(frequencies.rows()) != domain.dim() || frequencies.cols() == 0) {
    throw ValidationError("RFF frequency matrix must be d x m' with m' >= 1");
  }
  if (!frequencies.allFinite()) {
    throw ValidationError("RFF frequencies must be finite");
  }
  FeatureMap map;
  map.kind_ = MapKind::Rff;
  map.domain_ = std::move(domain);
  map.sigma_ = sigma;
  map.seed_ = seed;
  map.m_ = 2 * static_cast<std::size_t>(frequencies.cols());
  map.frequencies_ = std::move(frequencies);
  map.finalize();
  return map;
}

FeatureMap FeatureMap::race(Domain domain, std::size_t repetitions, std::size_t buckets, double bin_width,
                            std::uint64_t seed) {
  if (repetitions == 0) {
    throw ValidationError("RACE needs at least one hash repetition");
  }
  if (buckets < 2) {
    throw ValidationError("RACE needs at least two buckets per hash");
  }
  if (!(bin_width > 0.0) || !std::isfinite(bin_width)) {
    throw ValidationError("RACE bin width must be positive");
  }
  const auto d = static_cast<Eigen::Index>(domain.dim());
  const auto reps = static_cast<Eigen::Index>(repetitions);
  Rng rng(derive_seed(seed, 0x5241'4345));
  std::normal_distribution<double> normal;
  Eigen::MatrixXd proj(reps, d);
  Eigen::VectorXd offsets(reps);
  for (Eigen::Index r = 0; r < reps; ++r) {
    for (Eigen::Index j = 0; j < d; ++j) {
      proj(r, j) = normal(rng);
    }
    offsets(r) = uniform01(rng) * bin_width;
  }
  return race_from_hashes(std::move(domain), buckets, bin_width, std::move(proj), std::move(offsets), seed);
}

FeatureMap FeatureMap::race_from_hashes(Domain domain, std::size_t buckets, double bin_width,
                                        Eigen::MatrixXd projections, Eigen::VectorXd offsets,
                                        std::uint64_t seed) {
  if (buckets < 2) {
    throw ValidationError("RACE needs at least two buckets per hash");
  }
  if (!(bin_width > 0.0) || !std::isfinite(bin_width)) {
    throw ValidationError("RACE bin width must be positive");
  }
  if (projections.rows() == 0 || static_cast<std::size_t>(projections.cols()) != domain.dim() ||
      offsets.size() != projections.rows()) {
    throw ValidationError("RACE projections must be R x d with one offset per hash");
  }
  if (!projections.allFinite() || !offsets.allFinite()) {
    throw ValidationError("RACE hash parameters must be finite");
  }
  FeatureMap map;
  map.kind_ = MapKind::Race;
  map.domain_ = std::move(domain);
  map.buckets_ = buckets;
  map.bin_width_ = bin_width;
  map.seed_ = seed;
  map.m_ = static_cast<std::size_t>(projections.rows()) * buckets;
  map.projections_ = std::move(projections);
  map.offsets_ = std::move(offsets);
  map.finalize();
  return map;
}

void FeatureMap::finalize() { id_ = fingerprint(*this); }

double FeatureMap::sensitivity_l1() const {
  switch (kind_) {
    case MapKind::Hist: return static_cast<double>(domain_.dim());
    case MapKind::Rff: return static_cast<double>(m_ / 2) * std::sqrt(2.0);
    case MapKind::Race: return static_cast<double>(repetitions());
  }
  return 0.0;
}

std::size_t FeatureMap::active_count() const {
  switch (kind_) {
    case MapKind::Hist: return domain_.dim();
    case MapKind::Race: return repetitions();
    case MapKind::Rff: break;
  }
  throw ValidationError("RFF features are dense");
}

std::size_t FeatureMap::hist_bin(std::size_t j, double v) const {
  const double lo = domain_.lower()[j];
  const double hi = domain_.upper()[j];
  const double pos = (v - lo) * static_cast<double>(n_bins_) / (hi - lo);
  const double idx = std::floor(pos);
  if (idx <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(idx), n_bins_ - 1);
}

std::size_t FeatureMap::race_bucket(std::size_t r, std::span<const double> x) const {
  const auto ri = static_cast<Eigen::Index>(r);
  double proj = offsets_(ri);
  for (std::size_t j = 0; j < x.size(); ++j) {
    proj += projections_(ri, static_cast<Eigen::Index>(j)) * x[j];
  }
  const auto cell = static_cast<long long>(std::floor(proj / bin_width_));
  const auto w = static_cast<long long>(buckets_);
  return static_cast<std::size_t>(((cell % w) + w) % w);
}

void FeatureMap::active_indices(std::span<const double> x, std::span<std::uint32_t> out) const {
  if (x.size() != input_dim()) {
    throw ValidationError("point dimension " + std::to_string(x.size()) + " does not match map input " +
                          std::to_string(input_dim()));
  }
  switch (kind_) {
    case MapKind::Hist:
      domain_.check_point(x);
      for (std::size_t j = 0; j < x.size(); ++j) {
        out[j] = static_cast<std::uint32_t>(j * n_bins_ + hist_bin(j, x[j]));
      }
      return;
    case MapKind::Race:
      check_finite(x);
      for (std::size_t r = 0; r < repetitions(); ++r) {
        out[r] = static_cast<std::uint32_t>(r * buckets_ + race_bucket(r, x));
      }
      return;
    case MapKind::Rff:
      break;
  }
  throw ValidationError("RFF features are dense");
}

void FeatureMap::embed(std::span<const double> x, std::span<double> out) const {
  if (x.size() != input_dim()) {
    throw ValidationError("point dimension " + std::to_string(x.size()) + " does not match map input " +
                          std::to_string(input_dim()));
  }
  if (out.size() != m_) {
    throw ValidationError("output buffer must hold m values");
  }
  if (kind_ == MapKind::Rff) {
    check_finite(x);
    const auto half = static_cast<std::size_t>(frequencies_.cols());
    for (std::size_t c = 0; c < half; ++c) {
      double z = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) {
        z += x[j] * frequencies_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c));
      }
      out[c] = std::cos(z);
      out[half + c] = std::sin(z);
    }
    return;
  }
  std::vector<std::uint32_t> idx(active_count());
  active_indices(x, idx);
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto i : idx) out[i] = 1.0;
}

std::vector<double> FeatureMap::embed(std::span<const double> x) const {
  std::vector<double> out(m_);
  embed(x, out);
  return out;
}

double FeatureMap::kernel_estimate(std::span<const double> x, std::span<const double> y) const {
  if (kind_ == MapKind::Rff) {
    const auto fx = embed(x);
    const auto fy = embed(y);
    double dot = 0.0;
    for (std::size_t i = 0; i < m_; ++i) dot += fx[i] * fy[i];
    return dot / static_cast<double>(m_ / 2);
  }
  std::vector<std::uint32_t> ix(active_count());
  std::vector<std::uint32_t> iy(active_count());
  active_indices(x, ix);
  active_indices(y, iy);
  std::size_t hits = 0;
  for (std::size_t k = 0; k < ix.size(); ++k) hits += ix[k] == iy[k] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ix.size());
}

}  // namespace m2m
