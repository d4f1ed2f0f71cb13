#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "m2m/dataset.hpp"
#include "m2m/estimator.hpp"
#include "m2m/target.hpp"

namespace m2m {

/// Reported value (clamped where the quantity is a probability) and the raw estimate.
struct Estimate {
  double value = 0.0;
  double raw = 0.0;
};

/// `count` equi-spaced thresholds lower + k (upper - lower) / count, k = 1..count.
std::vector<double> cdf_thresholds(const Domain& domain, std::size_t attr, std::size_t count = 10);

/// One estimate per threshold, clamped to [0, 1]. No monotone correction.
std::vector<Estimate> estimate_cdf(const SketchEstimator& est, std::size_t attr, std::span<const double> thresholds);
std::vector<Estimate> estimate_cdf(const PrivateSketch& sketch, std::size_t attr, std::span<const double> thresholds,
                                   const TrainConfig& config);

struct CovarianceEstimate {
  Eigen::VectorXd means;
  Eigen::MatrixXd covariance;  // exactly symmetric
};

/// Two passes over one design: first moments, then centered products for i <= j.
CovarianceEstimate estimate_covariance(const SketchEstimator& est);
CovarianceEstimate estimate_covariance(const PrivateSketch& sketch, const TrainConfig& config);

/// Counting queries as fractions in [0, 1]. Each query must be a conjunction of
/// exactly three predicates on three distinct attributes.
std::vector<Estimate> answer_queries(const SketchEstimator& est, std::span<const target::BoxIndicator> queries);
std::vector<Estimate> answer_queries(const PrivateSketch& sketch, std::span<const target::BoxIndicator> queries,
                                     const TrainConfig& config);

/// Random three-predicate queries: distinct attributes, each an upper or lower
/// bound drawn uniformly inside the domain.
std::vector<target::BoxIndicator> random_queries(const Domain& domain, std::size_t count, std::uint64_t seed);

// Ground truth on raw data.
std::vector<double> empirical_cdf(const Dataset& data, std::size_t attr, std::span<const double> thresholds);
/// 1/n normalized covariance.
Eigen::MatrixXd empirical_covariance(const Dataset& data);

}  // namespace m2m
