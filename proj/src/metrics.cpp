#include "m2m/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "m2m/error.hpp"

namespace m2m {

double mre(double estimate, double truth) {
  if (truth == 0.0) {
    throw ValidationError("relative error is undefined for a zero true value");
  }
  return std::abs(estimate - truth) / std::abs(truth);
}

double mae(std::span<const double> estimates, std::span<const double> truths) {
  if (estimates.size() != truths.size() || estimates.empty()) {
    throw ValidationError("mae needs two non-empty vectors of equal length");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) sum += std::abs(estimates[i] - truths[i]);
  return sum / static_cast<double>(estimates.size());
}

double emd_1d(std::span<const double> cdf_estimate, std::span<const double> cdf_truth) {
  return mae(cdf_estimate, cdf_truth);
}

double frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError("frobenius distance needs matrices of equal shape");
  }
  return (a - b).norm();
}

double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError("auc needs one label per score");
  }
  std::size_t positives = 0;
  for (const double y : labels) {
    if (y != 0.0 && y != 1.0) throw ValidationError("auc labels must be 0 or 1");
    positives += y == 1.0 ? 1 : 0;
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw ValidationError("auc needs both classes to be present");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of (average) ranks of the positives.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1.0) rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

}  // namespace m2m
