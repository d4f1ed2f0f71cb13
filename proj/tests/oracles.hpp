#pragma once

// Reference implementations used only by tests. They follow the textbook
// formulas directly and share no code paths with the library internals.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "m2m/feature_map.hpp"

namespace oracle {

inline std::vector<double> embed(const m2m::FeatureMap& map, std::span<const double> x) {
  const auto& dom = map.domain();
  std::vector<double> out(map.dim(), 0.0);
  switch (map.kind()) {
    case m2m::MapKind::Hist: {
      const std::size_t b = map.n_bins();
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double width = (dom.upper()[j] - dom.lower()[j]) / static_cast<double>(b);
        auto k = static_cast<long>(std::floor((x[j] - dom.lower()[j]) / width));
        k = std::clamp<long>(k, 0, static_cast<long>(b) - 1);
        out[j * b + static_cast<std::size_t>(k)] = 1.0;
      }
      break;
    }
    case m2m::MapKind::Rff: {
      const auto& w = map.frequencies();
      const auto half = static_cast<std::size_t>(w.cols());
      for (std::size_t k = 0; k < half; ++k) {
        double t = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) t += x[j] * w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
        out[k] = std::cos(t);
        out[half + k] = std::sin(t);
      }
      break;
    }
    case m2m::MapKind::Race: {
      const auto& proj = map.projections();
      const auto w = static_cast<long>(map.buckets());
      for (std::size_t r = 0; r < map.repetitions(); ++r) {
        double t = map.offsets()(static_cast<Eigen::Index>(r));
        for (std::size_t j = 0; j < x.size(); ++j) t += proj(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) * x[j];
        long h = static_cast<long>(std::floor(t / map.bin_width())) % w;
        if (h < 0) h += w;
        out[r * map.buckets() + static_cast<std::size_t>(h)] = 1.0;
      }
      break;
    }
  }
  return out;
}

/// Dense N x m feature matrix.
template <class Rows>
Eigen::MatrixXd features(const m2m::FeatureMap& map, const Rows& rows) {
  Eigen::MatrixXd p(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(map.dim()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto v = embed(map, rows[i]);
    for (std::size_t k = 0; k < v.size(); ++k) p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v[k];
  }
  return p;
}

/// Ridge minimizer via QR on the stacked system [P / sqrt(N); sqrt(lambda) I] a = [F / sqrt(N); 0].
inline Eigen::VectorXd ridge(const Eigen::MatrixXd& p, const Eigen::VectorXd& f, double lambda) {
  const Eigen::Index n = p.rows(), m = p.cols();
  Eigen::MatrixXd a(n + m, m);
  a.topRows(n) = p / std::sqrt(static_cast<double>(n));
  a.bottomRows(m) = std::sqrt(lambda) * Eigen::MatrixXd::Identity(m, m);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n + m);
  b.head(n) = f / std::sqrt(static_cast<double>(n));
  return a.colPivHouseholderQr().solve(b);
}

/// O(n^2) pair count with ties worth 1/2.
inline double auc(const std::vector<double>& scores, const std::vector<double>& labels) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1.0) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0.0) continue;
      pairs += 1.0;
      wins += scores[i] > scores[j] ? 1.0 : (scores[i] == scores[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

/// Unweighted logistic regression by Newton's method with a tiny ridge term.
/// x is n x p (no intercept column); returns p coefficients followed by the intercept.
inline Eigen::VectorXd logistic_newton(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int iterations = 50,
                                       double ridge = 1e-6) {
  const Eigen::Index n = x.rows(), p = x.cols();
  Eigen::MatrixXd xa(n, p + 1);
  xa.leftCols(p) = x;
  xa.col(p).setOnes();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p + 1);
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd z = xa * theta;
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu(i) = 1.0 / (1.0 + std::exp(-z(i)));
      w(i) = mu(i) * (1.0 - mu(i));
    }
    const Eigen::VectorXd grad = xa.transpose() * (mu - y) / static_cast<double>(n) + ridge * theta;
    Eigen::MatrixXd h = xa.transpose() * w.asDiagonal() * xa / static_cast<double>(n);
    h.diagonal().array() += ridge;
    theta -= h.ldlt().solve(grad);
  }
  return theta;
}

/// Sample mean and variance.
inline std::pair<double, double> mean_var(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, ss / static_cast<double>(v.size() - 1)};
}

}  // namespace oracle
