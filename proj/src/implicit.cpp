#include "m2m/implicit.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "m2m/error.hpp"
#include "m2m/metrics.hpp"
#include "m2m/rng.hpp"

namespace m2m {
namespace {

// log(1 + exp(t)) without overflow.
double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

SampleWeights compute_weights(std::shared_ptr<const Design> design, const PrivateSketch& sketch, double lambda) {
  if (!design) {
    throw ValidationError("weights need a synthetic design");
  }
  if (design->map().id() != sketch.spec_id()) {
    throw ValidationError("design and sketch use different feature maps");
  }
  const RidgeSolver solver(design->gram(), lambda);
  if (lambda == 0.0 && solver.method() != "cholesky") {
    throw NumericError("Gram matrix is singular and lambda = 0; use a positive penalty");
  }
  const auto s = sketch.normalized();
  const Eigen::VectorXd v = solver.solve(Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()))));
  SampleWeights out;
  out.w = design->apply(v);
  out.lambda = lambda;
  out.design = std::move(design);
  if (!out.w.allFinite()) {
    throw NumericError("sample weights are not finite");
  }
  return out;
}

GdResult gradient_descent(const ObjectiveFn& objective, Eigen::VectorXd theta0, double weight_mass,
                          const GdConfig& config) {
  if (!(config.step > 0.0)) {
    throw ValidationError("gradient step must be positive");
  }
  GdResult out;
  out.theta = std::move(theta0);
  Eigen::VectorXd grad(out.theta.size());
  out.objective = objective(out.theta, grad);
  if (!(weight_mass > 0.0)) {
    // All weights zero: the objective is flat, theta0 is already optimal.
    out.converged = true;
    out.message = "zero weights";
    return out;
  }
  const double step = config.step / weight_mass;
  std::size_t increases = 0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    if (grad.norm() / weight_mass < config.tolerance) {
      out.converged = true;
      out.message = "gradient below tolerance";
      return out;
    }
    out.theta -= step * grad;
    const double next = objective(out.theta, grad);
    ++out.iterations;
    if (!std::isfinite(next)) {
      out.diverged = true;
      out.objective = next;
      out.message = "objective became non-finite";
      return out;
    }
    increases = next > out.objective ? increases + 1 : 0;
    out.objective = next;
    if (increases >= config.divergence_window) {
      out.diverged = true;
      out.message = "objective increased for " + std::to_string(increases) + " consecutive steps";
      return out;
    }
  }
  out.converged = grad.norm() / weight_mass < config.tolerance;
  out.message = out.converged ? "gradient below tolerance" : "iteration budget exhausted";
  return out;
}

GdResult fit_weighted(const SampleWeights& weights, const LossFn& loss, Eigen::VectorXd theta0,
                      const GdConfig& config) {
  const Dataset& samples = weights.samples();
  ObjectiveFn objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    grad.setZero(theta.size());
    Eigen::VectorXd g(theta.size());
    double value = 0.0;
    for (std::size_t i = 0; i < samples.rows(); ++i) {
      const double wi = weights.w(static_cast<Eigen::Index>(i));
      if (wi == 0.0) continue;
      g.setZero();
      value += wi * loss(samples.row(i), theta, g);
      grad += wi * g;
    }
    return value;
  };
  return gradient_descent(objective, std::move(theta0), weights.w.lpNorm<1>(), config);
}

ObjectiveFn logistic_objective(const SampleWeights& weights) {
  const Dataset& samples = weights.samples();
  const std::size_t d = samples.cols();
  if (d < 2) {
    throw ValidationError("logistic regression needs at least one feature and a label");
  }
  const auto n = static_cast<Eigen::Index>(samples.rows());
  const auto p = static_cast<Eigen::Index>(d - 1);
  // Features with a trailing constant column for the intercept, and labels as +-1.
  Eigen::MatrixXd x(n, p + 1);
  Eigen::VectorXd sign(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = samples.row(static_cast<std::size_t>(i));
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = row[static_cast<std::size_t>(j)];
    x(i, p) = 1.0;
    sign(i) = row[d - 1] > 0.5 ? 1.0 : -1.0;
  }
  Eigen::VectorXd w = weights.w;
  return [x = std::move(x), sign = std::move(sign), w = std::move(w)](const Eigen::VectorXd& theta,
                                                                      Eigen::VectorXd& grad) {
    const Eigen::VectorXd margin = (x * theta).cwiseProduct(sign);
    Eigen::VectorXd coeff(margin.size());
    double value = 0.0;
    for (Eigen::Index i = 0; i < margin.size(); ++i) {
      value += w(i) * softplus(-margin(i));
      coeff(i) = -w(i) * sign(i) * sigmoid(-margin(i));
    }
    grad = x.transpose() * coeff;
    return value;
  };
}

namespace {

void check_labeled(const Domain& domain) {
  const std::size_t d = domain.dim();
  if (d < 2 || !domain.is_binary(d - 1)) {
    throw ValidationError("logistic regression needs the last attribute to be a binary label");
  }
}

}  // namespace

LogisticModel fit_logistic(const SampleWeights& weights, const PrivateSketch& sketch, const GdConfig& gd) {
  const Domain& domain = sketch.map().domain();
  check_labeled(domain);
  if (weights.design->map().id() != sketch.spec_id()) {
    throw ValidationError("weights were computed for a different feature map");
  }
  LogisticModel model;
  model.config = gd;
  model.spec_id = sketch.spec_id();
  model.lambda = weights.lambda;
  if (sketch.map().kind() == MapKind::Hist) {
    model.warnings.push_back(
        "HIST sketches only hold per-attribute marginals and cannot capture the feature/label correlation; "
        "expect near-chance AUC");
  }
  const ObjectiveFn objective = logistic_objective(weights);
  const double mass = weights.w.lpNorm<1>();

  Rng rng(derive_seed(gd.seed, 0x4c4f'4749'54));
  std::normal_distribution<double> normal;
  const auto dim = static_cast<Eigen::Index>(domain.dim());  // d - 1 coefficients + intercept
  const std::size_t restarts = std::max<std::size_t>(1, gd.restarts);
  GdResult best;
  bool found = false;
  std::string last_message;
  for (std::size_t r = 0; r < restarts; ++r) {
    Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(dim);
    if (r > 0) {
      for (Eigen::Index k = 0; k < dim; ++k) theta0(k) = normal(rng);
    }
    GdResult res = gradient_descent(objective, std::move(theta0), mass, gd);
    ++model.restarts;
    if (res.diverged) {
      last_message = res.message;
      model.warnings.push_back("restart " + std::to_string(r) + " diverged: " + res.message);
      continue;
    }
    if (!found || res.objective < best.objective) {
      best = std::move(res);
      found = true;
    }
  }
  if (!found) {
    throw NumericError("all gradient-descent restarts diverged (" + last_message + ")");
  }
  model.theta = best.theta.head(dim - 1);
  model.intercept = best.theta(dim - 1);
  model.objective = best.objective;
  model.iterations = best.iterations;
  model.converged = best.converged;
  return model;
}

LogisticModel fit_logistic_from_sketch(const PrivateSketch& sketch, const TrainConfig& config, const GdConfig& gd) {
  const Domain& domain = sketch.map().domain();
  check_labeled(domain);
  const double lambda =
      regularization_lambda(sketch.map(), sketch.epsilon_num(), sketch.noisy_count(), config.extra_reg);
  auto design = std::make_shared<const Design>(sketch.map_ptr(), sample_prior(domain, config.n_synth, config.seed));
  return fit_logistic(compute_weights(std::move(design), sketch, lambda), sketch, gd);
}

std::vector<double> logistic_scores(const LogisticModel& model, const Dataset& data) {
  const auto p = static_cast<std::size_t>(model.theta.size());
  if (data.cols() < p) {
    throw ValidationError("dataset has fewer feature columns than the model");
  }
  std::vector<double> out(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    double z = model.intercept;
    for (std::size_t j = 0; j < p; ++j) z += model.theta(static_cast<Eigen::Index>(j)) * data(i, j);
    out[i] = z;
  }
  return out;
}

double logistic_auc(const LogisticModel& model, const Dataset& data) {
  const auto p = static_cast<std::size_t>(model.theta.size());
  if (data.cols() != p + 1) {
    throw ValidationError("evaluation data must have " + std::to_string(p) + " features plus a label column");
  }
  std::vector<double> labels(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) labels[i] = data(i, p);
  return auc(logistic_scores(model, data), labels);
}

}  // namespace m2m
