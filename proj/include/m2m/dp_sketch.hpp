#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "m2m/dataset.hpp"
#include "m2m/feature_map.hpp"
#include "m2m/rng.hpp"

namespace m2m {

/// Sum of features and record count, kept apart so sketches stay mergeable.
struct ExactSketch {
  std::vector<double> sum_features;
  std::uint64_t count = 0;
};

/// sum_i Phi(x_i) with a deterministic compensated reduction: the result does
/// not depend on the thread count. Records are validated against the domain
/// for HIST (others only need finite coordinates).
ExactSketch sketch_exact(const FeatureMap& map, const Dataset& records);

/// Budget split used when the caller does not choose one: 98% numerator, 2% count.
inline constexpr double kDefaultSplitNum = 0.98;

/// Published artifact: noisy sum of features plus noisy count.
class PrivateSketch {
 public:
  PrivateSketch(std::shared_ptr<const FeatureMap> map, std::vector<double> noisy_sum, double noisy_count,
                double epsilon_num, double epsilon_den);

  const FeatureMap& map() const noexcept { return *map_; }
  std::shared_ptr<const FeatureMap> map_ptr() const noexcept { return map_; }
  const std::string& spec_id() const noexcept { return map_->id(); }

  const std::vector<double>& noisy_sum() const noexcept { return noisy_sum_; }
  /// Raw draw n + zeta; may be below 1 or negative.
  double noisy_count() const noexcept { return noisy_count_; }
  /// max(noisy_count, 1), the estimate of n used everywhere downstream.
  double clamped_count() const noexcept;
  double epsilon_num() const noexcept { return epsilon_num_; }
  double epsilon_den() const noexcept { return epsilon_den_; }
  double epsilon() const noexcept { return epsilon_num_ + epsilon_den_; }

  /// Laplace scale of each sum entry (Delta_1 / eps_num) and of the count (1 / eps_den).
  double sum_noise_scale() const;
  double count_noise_scale() const;

  /// noisy_sum / max(noisy_count, 1), recomputed on every call.
  std::vector<double> normalized() const;

  std::optional<std::uint64_t> noise_seed;
  /// Number of sketches of disjoint datasets merged into this one.
  unsigned parents = 1;
  std::optional<Normalization> normalization;

 private:
  std::shared_ptr<const FeatureMap> map_;
  std::vector<double> noisy_sum_;
  double noisy_count_;
  double epsilon_num_;
  double epsilon_den_;
};

/// Laplace mechanism with the budget split eps_num = split_num * eps,
/// eps_den = (1 - split_num) * eps. epsilon = +inf adds no noise.
PrivateSketch privatize(const ExactSketch& exact, std::shared_ptr<const FeatureMap> map, double epsilon,
                        double split_num, std::uint64_t noise_seed);

/// Same mechanism with explicit per-part budgets; either may be +inf
/// (e.g. eps_den = inf for a noiseless count).
PrivateSketch privatize_split(const ExactSketch& exact, std::shared_ptr<const FeatureMap> map, double epsilon_num,
                              double epsilon_den, std::uint64_t noise_seed);

/// Sketch of the union of two disjoint datasets. Both inputs must come from
/// the same feature map with the same per-entry noise scales.
PrivateSketch merge(const PrivateSketch& a, const PrivateSketch& b);

}  // namespace m2m
