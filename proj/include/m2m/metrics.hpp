#pragma once

#include <span>

#include <Eigen/Dense>

namespace m2m {

/// |estimate - truth| / |truth|; truth must be nonzero.
double mre(double estimate, double truth);
/// Mean absolute difference.
double mae(std::span<const double> estimates, std::span<const double> truths);
/// Mean absolute difference between two CDFs sampled at the same points.
double emd_1d(std::span<const double> cdf_estimate, std::span<const double> cdf_truth);
double frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
/// Mann-Whitney AUC with ties counted as 1/2. labels are 0/1; both classes required.
double auc(std::span<const double> scores, std::span<const double> labels);

}  // namespace m2m
