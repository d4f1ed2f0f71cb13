#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "m2m/dataset.hpp"
#include "m2m/dp_sketch.hpp"
#include "m2m/estimator.hpp"

namespace m2m {

/// Sketch-dependent weight of every synthetic sample:
///   w_i = (1/N) Phi(x_i)^T (G + lambda I)^{-1} s
/// so that sum_i w_i L(x_i) = <fit(L), s> for any target L. Independent of
/// the loss, computed once and reused.
struct SampleWeights {
  std::shared_ptr<const Design> design;
  Eigen::VectorXd w;
  double lambda = 0.0;

  const Dataset& samples() const { return design->samples(); }
  std::size_t size() const { return static_cast<std::size_t>(w.size()); }
};

/// lambda = 0 is accepted only when the Gram matrix is positive definite.
SampleWeights compute_weights(std::shared_ptr<const Design> design, const PrivateSketch& sketch, double lambda);

/// Value and gradient of one per-sample loss L_theta(x).
using LossFn = std::function<double(std::span<const double> x, const Eigen::VectorXd& theta, Eigen::VectorXd& grad)>;

/// theta -> (sum_i w_i L_theta(x_i), gradient).
using ObjectiveFn = std::function<double(const Eigen::VectorXd& theta, Eigen::VectorXd& grad)>;

struct GdConfig {
  /// Fixed step, divided by sum_i |w_i| before use.
  double step = 0.1;
  std::size_t iterations = 3000;
  /// Stop once ||grad|| / sum_i |w_i| falls below this.
  double tolerance = 1e-6;
  /// Abort after this many consecutive objective increases.
  std::size_t divergence_window = 20;
  /// Seeded restarts for fit_logistic_from_sketch (first one starts at zero).
  std::size_t restarts = 3;
  std::uint64_t seed = 0;
};

struct GdResult {
  Eigen::VectorXd theta;
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool diverged = false;
  std::string message;
};

/// Gradient descent on an arbitrary objective with the given step normalizer.
GdResult gradient_descent(const ObjectiveFn& objective, Eigen::VectorXd theta0, double weight_mass,
                          const GdConfig& config);

/// Gradient descent on theta -> sum_i w_i L_theta(x_i).
GdResult fit_weighted(const SampleWeights& weights, const LossFn& loss, Eigen::VectorXd theta0,
                      const GdConfig& config);

struct LogisticModel {
  Eigen::VectorXd theta;  // one coefficient per feature (d - 1)
  double intercept = 0.0;
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t restarts = 0;
  double lambda = 0.0;
  std::string spec_id;
  std::vector<std::string> warnings;
  GdConfig config;
};

/// log(1 + exp(-(2y - 1)(theta . x + b))) summed with the sample weights.
/// theta packs the d - 1 feature coefficients followed by the intercept.
ObjectiveFn logistic_objective(const SampleWeights& weights);

/// Logistic regression on precomputed weights for `sketch`.
LogisticModel fit_logistic(const SampleWeights& weights, const PrivateSketch& sketch, const GdConfig& gd = {});

/// Logistic regression from a sketch whose last attribute is a binary label.
LogisticModel fit_logistic_from_sketch(const PrivateSketch& sketch, const TrainConfig& config,
                                       const GdConfig& gd = {});

/// theta . x + b for each row (the label column, if present, is ignored).
std::vector<double> logistic_scores(const LogisticModel& model, const Dataset& data);
/// AUC against the last column of data.
double logistic_auc(const LogisticModel& model, const Dataset& data);

}  // namespace m2m
