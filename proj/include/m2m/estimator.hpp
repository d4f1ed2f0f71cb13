#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "m2m/dataset.hpp"
#include "m2m/dp_sketch.hpp"
#include "m2m/feature_map.hpp"

namespace m2m {

/// Scalar function of one record whose dataset average is being estimated.
using TargetFn = std::function<double(std::span<const double>)>;

struct TrainConfig {
  std::size_t n_synth = 100000;
  /// Multiplier on the noise-derived ridge penalty (1 = plain rule).
  double extra_reg = 1.0;
  std::uint64_t seed = 0;
};

/// Smallest penalty ever used; the eps = inf case.
inline constexpr double kLambdaFloor = 1e-9;

/// n i.i.d. draws from the uniform prior on the domain (fair coin on binary attributes).
Dataset sample_prior(const Domain& domain, std::size_t n, std::uint64_t seed);

/// Variance of one Laplace(Delta_1 / eps_num) entry: 2 Delta_1^2 / eps_num^2.
double noise_variance(const FeatureMap& map, double epsilon_num);

/// extra_reg * 2 Delta_1^2 / (eps_num^2 max(noisy_count, 1)); kLambdaFloor when eps_num = inf.
double regularization_lambda(const FeatureMap& map, double epsilon_num, double noisy_count, double extra_reg);

/// The penalty under which J(a) bounds the expected squared error for a
/// dataset of exactly n records: noise_variance / n^2.
double bound_lambda(const FeatureMap& map, double epsilon_num, double n);

/// Synthetic design shared by every target fitted against one feature map:
/// the prior samples, their embedded features and the Gram matrix
/// G = (1/N) P^T P. Dense features are cached when they fit in memory; one-hot
/// maps cache the active indices only.
class Design {
 public:
  Design(std::shared_ptr<const FeatureMap> map, Dataset samples);

  const FeatureMap& map() const noexcept { return *map_; }
  std::shared_ptr<const FeatureMap> map_ptr() const noexcept { return map_; }
  const Dataset& samples() const noexcept { return samples_; }
  std::size_t size() const noexcept { return samples_.rows(); }

  /// (1/N) P^T P, full symmetric m x m.
  const Eigen::MatrixXd& gram() const noexcept { return gram_; }

  struct Moments {
    Eigen::MatrixXd cross;     // m x T, column t = (1/N) P^T F_t
    Eigen::VectorXd mean_sq;   // T, (1/N) sum f_t(x)^2
  };
  /// One pass over the samples for a batch of targets.
  Moments moments(std::span<const TargetFn> targets) const;
  Moments moments(const Eigen::MatrixXd& target_values) const;  // N x T values

  /// Target values F (N x T).
  Eigen::MatrixXd evaluate(std::span<const TargetFn> targets) const;

  /// (1/N) P v: one value per synthetic sample.
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;

  /// Phi(sample i), densified.
  void features(std::size_t i, std::span<double> out) const;

 private:
  void build();

  std::shared_ptr<const FeatureMap> map_;
  Dataset samples_;
  Eigen::MatrixXd gram_;
  Eigen::MatrixXd dense_;                 // N x m when cached
  std::vector<std::uint32_t> active_;     // N x k one-hot indices
  bool dense_cached_ = false;
};

/// Factorization of G + lambda I: Cholesky, then Cholesky with diagonal
/// jitter 1e-10 trace/m, then a complete orthogonal decomposition.
class RidgeSolver {
 public:
  RidgeSolver(const Eigen::MatrixXd& gram, double lambda);

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;

  double lambda() const noexcept { return lambda_; }
  const std::string& method() const noexcept { return method_; }
  /// Reciprocal-condition based estimate of kappa(G + lambda I).
  double condition_estimate() const noexcept { return condition_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

 private:
  double lambda_;
  std::string method_;
  double condition_ = 1.0;
  std::vector<std::string> warnings_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  std::optional<Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>> cod_;
};

/// Condition numbers above this are reported in the diagnostics.
inline constexpr double kConditionWarning = 1e12;

struct FitDiagnostics {
  double train_loss = 0.0;      // (1/N) ||P a - F||^2
  double objective = 0.0;       // train_loss + lambda ||a||^2
  double residual_norm = 0.0;   // ||(G + lambda I) a - b|| / max(||b||, tiny)
  double condition_estimate = 1.0;
  std::string solver;
  std::vector<std::string> warnings;
};

/// Linear surrogate f~(x) = <a, Phi(x)> of one target.
struct Model {
  Eigen::VectorXd a;
  double lambda = 0.0;
  std::string spec_id;
  FitDiagnostics diagnostics;
};

/// Ridge fit of one target: argmin (1/N) ||P a - F||^2 + lambda ||a||^2.
Model fit(const Design& design, const TargetFn& f, double lambda);
/// Batch of targets sharing one factorization.
std::vector<Model> fit_many(const Design& design, std::span<const TargetFn> targets, double lambda);
std::vector<Model> fit_many(const Design& design, const RidgeSolver& solver, std::span<const TargetFn> targets);

/// <a, normalized sketch>.
double estimate(const Model& model, const PrivateSketch& sketch);

/// (1/N) sum (f(x_i) - <a, Phi(x_i)>)^2 + lambda ||a||^2, evaluated directly over the samples.
double loss_J(std::span<const double> a, const FeatureMap& map, const TargetFn& f, const Dataset& samples,
              double lambda);

/// Everything needed to answer many targets against one sketch: prior
/// samples, design, penalty and factorization are built once.
class SketchEstimator {
 public:
  SketchEstimator(const PrivateSketch& sketch, const TrainConfig& config);
  /// Reuses an existing design (e.g. one shared across several sketches of the same map).
  SketchEstimator(const PrivateSketch& sketch, std::shared_ptr<const Design> design, double lambda);

  double lambda() const noexcept { return solver_.lambda(); }
  const Design& design() const noexcept { return *design_; }
  std::shared_ptr<const Design> design_ptr() const noexcept { return design_; }
  const RidgeSolver& solver() const noexcept { return solver_; }
  const PrivateSketch& sketch() const noexcept { return sketch_; }
  const Eigen::VectorXd& normalized_sketch() const noexcept { return normalized_; }

  double estimate(const TargetFn& f) const;
  std::vector<double> estimate(std::span<const TargetFn> targets) const;
  std::vector<Model> models(std::span<const TargetFn> targets) const;

 private:
  PrivateSketch sketch_;
  std::shared_ptr<const Design> design_;
  RidgeSolver solver_;
  Eigen::VectorXd normalized_;
};

/// sample_prior -> regularization_lambda -> fit -> estimate.
double learn_and_estimate(const PrivateSketch& sketch, const TargetFn& f, const TrainConfig& config);

}  // namespace m2m
