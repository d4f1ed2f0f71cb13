#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "m2m/domain.hpp"

namespace m2m {

enum class MapKind { Hist, Rff, Race };

std::string to_string(MapKind kind);
MapKind map_kind_from_string(const std::string& name);

/// A frozen feature map Phi: R^d -> R^m. All randomness is drawn at
/// construction and stored, so embedding is a pure function of (map, x).
///
///  - HIST: per-attribute equal-width one-hot bins over the domain, m = d * n_bins.
///  - RFF:  [cos(x^T W), sin(x^T W)] with W in R^{d x m/2}, columns ~ N(0, sigma^-2 I).
///  - RACE: R p-stable hashes h_r(x) = floor((w_r . x + b_r) / width) mod W,
///          one-hot encoded and concatenated, m = R * W.
class FeatureMap {
 public:
  static FeatureMap hist(Domain domain, std::size_t n_bins);
  static FeatureMap rff(Domain domain, std::size_t m, double sigma, std::uint64_t seed);
  static FeatureMap race(Domain domain, std::size_t repetitions, std::size_t buckets, double bin_width,
                         std::uint64_t seed);

  /// Explicit-parameter constructors (deserialization and hand-built tests).
  static FeatureMap rff_from_frequencies(Domain domain, Eigen::MatrixXd frequencies, double sigma,
                                         std::uint64_t seed);
  static FeatureMap race_from_hashes(Domain domain, std::size_t buckets, double bin_width,
                                     Eigen::MatrixXd projections, Eigen::VectorXd offsets, std::uint64_t seed);

  MapKind kind() const noexcept { return kind_; }
  const Domain& domain() const noexcept { return domain_; }
  std::size_t input_dim() const noexcept { return domain_.dim(); }
  std::size_t dim() const noexcept { return m_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// max_x ||Phi(x)||_1: d for HIST, R for RACE, (m/2) sqrt(2) for RFF.
  double sensitivity_l1() const;

  /// HIST and RACE produce 0/1 vectors with a fixed number of ones.
  bool is_one_hot() const noexcept { return kind_ != MapKind::Rff; }
  /// Ones per embedded point for one-hot maps (d or R).
  std::size_t active_count() const;

  void embed(std::span<const double> x, std::span<double> out) const;
  std::vector<double> embed(std::span<const double> x) const;
  /// Positions of the ones, in increasing block order. One-hot maps only.
  void active_indices(std::span<const double> x, std::span<std::uint32_t> out) const;

  /// Normalized inner product <Phi(x), Phi(y)> / c with c = m/2 (RFF), R (RACE), d (HIST).
  double kernel_estimate(std::span<const double> x, std::span<const double> y) const;

  // Variant parameters; each accessor is only meaningful for its own variant.
  std::size_t n_bins() const noexcept { return n_bins_; }
  double sigma() const noexcept { return sigma_; }
  const Eigen::MatrixXd& frequencies() const noexcept { return frequencies_; }
  std::size_t repetitions() const noexcept { return static_cast<std::size_t>(projections_.rows()); }
  std::size_t buckets() const noexcept { return buckets_; }
  double bin_width() const noexcept { return bin_width_; }
  const Eigen::MatrixXd& projections() const noexcept { return projections_; }
  const Eigen::VectorXd& offsets() const noexcept { return offsets_; }

  /// Content fingerprint (hex FNV-1a of the canonical JSON form).
  const std::string& id() const noexcept { return id_; }

 private:
  FeatureMap() = default;
  void finalize();
  std::size_t hist_bin(std::size_t j, double v) const;
  std::size_t race_bucket(std::size_t r, std::span<const double> x) const;

  MapKind kind_ = MapKind::Hist;
  Domain domain_;
  std::size_t m_ = 0;
  std::uint64_t seed_ = 0;
  std::size_t n_bins_ = 0;
  double sigma_ = 0.0;
  Eigen::MatrixXd frequencies_;  // d x m'
  std::size_t buckets_ = 0;
  double bin_width_ = 0.0;
  Eigen::MatrixXd projections_;  // R x d
  Eigen::VectorXd offsets_;      // R
  std::string id_;
};

}  // namespace m2m
