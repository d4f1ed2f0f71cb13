#include "m2m/tasks.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "m2m/error.hpp"
#include "m2m/rng.hpp"

namespace m2m {
namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

std::vector<double> cdf_thresholds(const Domain& domain, std::size_t attr, std::size_t count) {
  if (attr >= domain.dim()) {
    throw ValidationError("attribute index out of range");
  }
  if (count == 0) {
    throw ValidationError("need at least one CDF threshold");
  }
  const double lo = domain.lower()[attr];
  const double hi = domain.upper()[attr];
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    out[k] = lo + static_cast<double>(k + 1) * (hi - lo) / static_cast<double>(count);
  }
  return out;
}

std::vector<Estimate> estimate_cdf(const SketchEstimator& est, std::size_t attr, std::span<const double> thresholds) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw ValidationError("CDF thresholds must be sorted");
  }
  const Domain& domain = est.sketch().map().domain();
  std::vector<TargetFn> fns;
  for (const double s : thresholds) {
    fns.push_back(to_function(target::CdfThreshold{attr, s}, domain));
  }
  const auto raw = est.estimate(fns);
  std::vector<Estimate> out(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) out[k] = {clamp01(raw[k]), raw[k]};
  return out;
}

std::vector<Estimate> estimate_cdf(const PrivateSketch& sketch, std::size_t attr, std::span<const double> thresholds,
                                   const TrainConfig& config) {
  return estimate_cdf(SketchEstimator(sketch, config), attr, thresholds);
}

CovarianceEstimate estimate_covariance(const SketchEstimator& est) {
  const Domain& domain = est.sketch().map().domain();
  const std::size_t d = domain.dim();
  std::vector<TargetFn> first;
  for (std::size_t j = 0; j < d; ++j) first.push_back(to_function(target::Moment{j, 1}, domain));
  const auto mu = est.estimate(first);

  std::vector<TargetFn> products;
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      products.push_back(to_function(target::CenteredProduct{i, j, mu[i], mu[j]}, domain));
      cells.emplace_back(i, j);
    }
  }
  const auto values = est.estimate(products);
  CovarianceEstimate out;
  out.means = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(d));
  out.covariance.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(cells[k].first);
    const auto j = static_cast<Eigen::Index>(cells[k].second);
    out.covariance(i, j) = values[k];
    out.covariance(j, i) = values[k];
  }
  return out;
}

CovarianceEstimate estimate_covariance(const PrivateSketch& sketch, const TrainConfig& config) {
  return estimate_covariance(SketchEstimator(sketch, config));
}

std::vector<Estimate> answer_queries(const SketchEstimator& est, std::span<const target::BoxIndicator> queries) {
  const Domain& domain = est.sketch().map().domain();
  std::vector<TargetFn> fns;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto& preds = queries[q].predicates;
    std::set<std::size_t> attrs;
    for (const auto& p : preds) attrs.insert(p.attr);
    if (preds.size() != 3 || attrs.size() != 3) {
      throw ValidationError("query " + std::to_string(q + 1) +
                            " must have exactly three predicates on three distinct attributes");
    }
    fns.push_back(to_function(queries[q], domain));
  }
  const auto raw = est.estimate(fns);
  std::vector<Estimate> out(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) out[k] = {clamp01(raw[k]), raw[k]};
  return out;
}

std::vector<Estimate> answer_queries(const PrivateSketch& sketch, std::span<const target::BoxIndicator> queries,
                                     const TrainConfig& config) {
  return answer_queries(SketchEstimator(sketch, config), queries);
}

std::vector<target::BoxIndicator> random_queries(const Domain& domain, std::size_t count, std::uint64_t seed) {
  const std::size_t d = domain.dim();
  if (d < 3) {
    throw ValidationError("three-predicate queries need at least three attributes");
  }
  Rng rng(derive_seed(seed, 0x5155'4552'59));
  std::vector<target::BoxIndicator> out;
  out.reserve(count);
  std::vector<std::size_t> attrs(d);
  for (std::size_t q = 0; q < count; ++q) {
    std::iota(attrs.begin(), attrs.end(), std::size_t{0});
    // Partial Fisher-Yates for three distinct attributes.
    for (std::size_t k = 0; k < 3; ++k) {
      const auto pick = k + std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(d - k)), d - k - 1);
      std::swap(attrs[k], attrs[pick]);
    }
    target::BoxIndicator box;
    for (std::size_t k = 0; k < 3; ++k) {
      const std::size_t j = attrs[k];
      Predicate p;
      p.attr = j;
      p.bound = (rng() >> 63) != 0 ? Predicate::Bound::Upper : Predicate::Bound::Lower;
      p.value = domain.lower()[j] + uniform01(rng) * (domain.upper()[j] - domain.lower()[j]);
      box.predicates.push_back(p);
    }
    out.push_back(std::move(box));
  }
  return out;
}

std::vector<double> empirical_cdf(const Dataset& data, std::size_t attr, std::span<const double> thresholds) {
  if (data.empty()) {
    throw ValidationError("empirical CDF of an empty dataset");
  }
  if (attr >= data.cols()) {
    throw ValidationError("attribute index out of range");
  }
  std::vector<double> out(thresholds.size(), 0.0);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      if (data(i, attr) <= thresholds[k]) out[k] += 1.0;
    }
  }
  for (double& v : out) v /= static_cast<double>(data.rows());
  return out;
}

Eigen::MatrixXd empirical_covariance(const Dataset& data) {
  if (data.empty()) {
    throw ValidationError("empirical covariance of an empty dataset");
  }
  const auto n = static_cast<Eigen::Index>(data.rows());
  const auto d = static_cast<Eigen::Index>(data.cols());
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      data.values().data(), n, d);
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mu;
  return (centered.transpose() * centered) / static_cast<double>(n);
}

}  // namespace m2m
