#include "m2m/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "m2m/error.hpp"
#include "m2m/parallel.hpp"
#include "m2m/rng.hpp"

namespace m2m {
namespace {

constexpr std::size_t kChunkRows = 4096;
constexpr std::size_t kGramSlots = 4;
// Largest dense N x m feature cache kept in memory (doubles).
constexpr std::size_t kDenseCacheLimit = 40'000'000;

std::size_t chunk_count(std::size_t n) { return (n + kChunkRows - 1) / kChunkRows; }

}  // namespace

Dataset sample_prior(const Domain& domain, std::size_t n, std::uint64_t seed) {
  if (n == 0) {
    throw ValidationError("the prior needs at least one synthetic sample");
  }
  const std::size_t d = domain.dim();
  Rng rng(derive_seed(seed, 0x5052'494f'52));
  Dataset out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = out.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      if (domain.kinds()[j] == AttributeKind::Binary) {
        x[j] = static_cast<double>(rng() >> 63);
      } else {
        const double lo = domain.lower()[j];
        const double hi = domain.upper()[j];
        x[j] = lo + (hi - lo) * uniform01(rng);
      }
    }
  }
  return out;
}

double noise_variance(const FeatureMap& map, double epsilon_num) {
  if (std::isinf(epsilon_num)) return 0.0;
  const double scale = map.sensitivity_l1() / epsilon_num;
  return 2.0 * scale * scale;
}

double regularization_lambda(const FeatureMap& map, double epsilon_num, double noisy_count, double extra_reg) {
  if (!(extra_reg > 0.0)) {
    throw ValidationError("extra regularization must be positive");
  }
  if (!(epsilon_num > 0.0)) {
    throw ValidationError("epsilon_num must be positive");
  }
  if (std::isinf(epsilon_num)) {
    return kLambdaFloor;
  }
  const double n = std::max(noisy_count, 1.0);
  return std::max(extra_reg * noise_variance(map, epsilon_num) / n, kLambdaFloor);
}

double bound_lambda(const FeatureMap& map, double epsilon_num, double n) {
  if (!(n >= 1.0)) {
    throw ValidationError("dataset size must be at least 1");
  }
  return noise_variance(map, epsilon_num) / (n * n);
}

// ---------------------------------------------------------------------------
// Design

Design::Design(std::shared_ptr<const FeatureMap> map, Dataset samples)
    : map_(std::move(map)), samples_(std::move(samples)) {
  if (!map_) {
    throw ValidationError("design needs a feature map");
  }
  if (samples_.empty()) {
    throw ValidationError("design needs at least one synthetic sample");
  }
  if (samples_.cols() != map_->input_dim()) {
    throw ValidationError("synthetic samples do not match the feature map input dimension");
  }
  build();
}

void Design::build() {
  const std::size_t n = samples_.rows();
  const std::size_t m = map_->dim();
  const double inv_n = 1.0 / static_cast<double>(n);
  gram_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));

  if (map_->is_one_hot()) {
    const std::size_t k = map_->active_count();
    const std::size_t block = m / k;
    // Block-major layout: active_[r * n + i] is the local bucket of sample i in block r.
    active_.assign(k * n, 0);
    parallel_for(chunk_count(n), [&](std::size_t c) {
      std::vector<std::uint32_t> idx(k);
      const std::size_t end = std::min(n, (c + 1) * kChunkRows);
      for (std::size_t i = c * kChunkRows; i < end; ++i) {
        map_->active_indices(samples_.row(i), idx);
        for (std::size_t r = 0; r < k; ++r) {
          active_[r * n + i] = static_cast<std::uint32_t>(idx[r] - r * block);
        }
      }
    });
    // Co-occurrence counts per block pair; integer counts are exact.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t s = r; s < k; ++s) pairs.emplace_back(r, s);
    }
    parallel_for(pairs.size(), [&](std::size_t p) {
      const auto [r, s] = pairs[p];
      std::vector<std::uint32_t> counts(block * block, 0);
      const std::uint32_t* br = active_.data() + r * n;
      const std::uint32_t* bs = active_.data() + s * n;
      for (std::size_t i = 0; i < n; ++i) {
        ++counts[br[i] * block + bs[i]];
      }
      for (std::size_t u = 0; u < block; ++u) {
        for (std::size_t v = 0; v < block; ++v) {
          const std::uint32_t c = counts[u * block + v];
          if (c == 0) continue;
          const auto row = static_cast<Eigen::Index>(r * block + u);
          const auto col = static_cast<Eigen::Index>(s * block + v);
          gram_(row, col) = static_cast<double>(c) * inv_n;
          gram_(col, row) = static_cast<double>(c) * inv_n;
        }
      }
    });
    return;
  }

  dense_cached_ = n * m <= kDenseCacheLimit;
  const std::size_t chunks = chunk_count(n);
  if (dense_cached_) {
    dense_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    parallel_for(chunks, [&](std::size_t c) {
      std::vector<double> phi(m);
      const std::size_t end = std::min(n, (c + 1) * kChunkRows);
      for (std::size_t i = c * kChunkRows; i < end; ++i) {
        map_->embed(samples_.row(i), phi);
        for (std::size_t q = 0; q < m; ++q) {
          dense_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) = phi[q];
        }
      }
    });
  }
  const std::size_t slots = std::min(kGramSlots, chunks);
  std::vector<Eigen::MatrixXd> partial(slots);
  parallel_for(slots, [&](std::size_t s) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    Eigen::MatrixXd buf;
    for (std::size_t c = s; c < chunks; c += slots) {
      const std::size_t begin = c * kChunkRows;
      const std::size_t rows = std::min(n, begin + kChunkRows) - begin;
      if (dense_cached_) {
        const auto block = dense_.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(rows));
        acc.noalias() += block.transpose() * block;
      } else {
        buf.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(m));
        std::vector<double> phi(m);
        for (std::size_t i = 0; i < rows; ++i) {
          map_->embed(samples_.row(begin + i), phi);
          for (std::size_t q = 0; q < m; ++q) buf(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) = phi[q];
        }
        acc.noalias() += buf.transpose() * buf;
      }
    }
    partial[s] = std::move(acc);
  });
  for (const auto& p : partial) gram_ += p;
  gram_ *= inv_n;
  // Exact symmetry regardless of GEMM rounding.
  gram_ = (0.5 * (gram_ + gram_.transpose())).eval();
}

void Design::features(std::size_t i, std::span<double> out) const {
  if (out.empty()) return;
  const std::size_t m = map_->dim();
  const std::size_t n = samples_.rows();
  if (map_->is_one_hot()) {
    const std::size_t k = map_->active_count();
    const std::size_t block = m / k;
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t r = 0; r < k; ++r) out[r * block + active_[r * n + i]] = 1.0;
    return;
  }
  if (dense_cached_) {
    for (std::size_t q = 0; q < m; ++q) out[q] = dense_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q));
    return;
  }
  map_->embed(samples_.row(i), out);
}

Eigen::MatrixXd Design::evaluate(std::span<const TargetFn> targets) const {
  const std::size_t n = samples_.rows();
  Eigen::MatrixXd values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(targets.size()));
  parallel_for(chunk_count(n), [&](std::size_t c) {
    const std::size_t end = std::min(n, (c + 1) * kChunkRows);
    for (std::size_t i = c * kChunkRows; i < end; ++i) {
      const auto x = samples_.row(i);
      for (std::size_t t = 0; t < targets.size(); ++t) {
        const double v = targets[t](x);
        if (!std::isfinite(v)) {
          throw NumericError("target evaluated to a non-finite value on a synthetic sample");
        }
        values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = v;
      }
    }
  });
  return values;
}

Design::Moments Design::moments(std::span<const TargetFn> targets) const { return moments(evaluate(targets)); }

Design::Moments Design::moments(const Eigen::MatrixXd& values) const {
  const std::size_t n = samples_.rows();
  const std::size_t m = map_->dim();
  if (static_cast<std::size_t>(values.rows()) != n) {
    throw ValidationError("target value matrix must have one row per synthetic sample");
  }
  const auto nt = values.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  Moments out;
  out.cross = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), nt);
  out.mean_sq = values.colwise().squaredNorm().transpose() * inv_n;

  if (map_->is_one_hot()) {
    const std::size_t k = map_->active_count();
    const std::size_t block = m / k;
    parallel_for(k, [&](std::size_t r) {
      const std::uint32_t* b = active_.data() + r * n;
      for (Eigen::Index t = 0; t < nt; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
          out.cross(static_cast<Eigen::Index>(r * block + b[i]), t) += values(static_cast<Eigen::Index>(i), t);
        }
      }
    });
    out.cross *= inv_n;
    return out;
  }

  const std::size_t chunks = chunk_count(n);
  const std::size_t slots = std::min(kGramSlots, chunks);
  std::vector<Eigen::MatrixXd> partial(slots);
  parallel_for(slots, [&](std::size_t s) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), nt);
    Eigen::MatrixXd buf;
    std::vector<double> phi(m);
    for (std::size_t c = s; c < chunks; c += slots) {
      const std::size_t begin = c * kChunkRows;
      const auto rows = static_cast<Eigen::Index>(std::min(n, begin + kChunkRows) - begin);
      const auto f = values.middleRows(static_cast<Eigen::Index>(begin), rows);
      if (dense_cached_) {
        acc.noalias() += dense_.middleRows(static_cast<Eigen::Index>(begin), rows).transpose() * f;
      } else {
        buf.resize(rows, static_cast<Eigen::Index>(m));
        for (Eigen::Index i = 0; i < rows; ++i) {
          map_->embed(samples_.row(begin + static_cast<std::size_t>(i)), phi);
          for (std::size_t q = 0; q < m; ++q) buf(i, static_cast<Eigen::Index>(q)) = phi[q];
        }
        acc.noalias() += buf.transpose() * f;
      }
    }
    partial[s] = std::move(acc);
  });
  for (const auto& p : partial) out.cross += p;
  out.cross *= inv_n;
  return out;
}

Eigen::VectorXd Design::apply(const Eigen::VectorXd& v) const {
  const std::size_t n = samples_.rows();
  const std::size_t m = map_->dim();
  if (static_cast<std::size_t>(v.size()) != m) {
    throw ValidationError("vector length must equal the sketch size m");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  parallel_for(chunk_count(n), [&](std::size_t c) {
    const std::size_t begin = c * kChunkRows;
    const std::size_t end = std::min(n, begin + kChunkRows);
    if (map_->is_one_hot()) {
      const std::size_t k = map_->active_count();
      const std::size_t block = m / k;
      for (std::size_t i = begin; i < end; ++i) {
        double acc = 0.0;
        for (std::size_t r = 0; r < k; ++r) acc += v(static_cast<Eigen::Index>(r * block + active_[r * n + i]));
        out(static_cast<Eigen::Index>(i)) = acc * inv_n;
      }
      return;
    }
    std::vector<double> phi(m);
    for (std::size_t i = begin; i < end; ++i) {
      features(i, phi);
      double acc = 0.0;
      for (std::size_t q = 0; q < m; ++q) acc += phi[q] * v(static_cast<Eigen::Index>(q));
      out(static_cast<Eigen::Index>(i)) = acc * inv_n;
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// RidgeSolver

RidgeSolver::RidgeSolver(const Eigen::MatrixXd& gram, double lambda) : lambda_(lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("ridge penalty must be finite and nonnegative");
  }
  if (gram.rows() != gram.cols() || gram.rows() == 0) {
    throw ValidationError("Gram matrix must be square and non-empty");
  }
  if (!gram.allFinite()) {
    throw NumericError("Gram matrix has non-finite entries");
  }
  const auto m = gram.rows();
  Eigen::MatrixXd a = gram;
  a.diagonal().array() += lambda;

  llt_.compute(a);
  method_ = "cholesky";
  if (llt_.info() != Eigen::Success) {
    const double jitter = 1e-10 * gram.trace() / static_cast<double>(m);
    a.diagonal().array() += jitter;
    llt_.compute(a);
    method_ = "cholesky+jitter";
    warnings_.push_back("Cholesky failed; added diagonal jitter " + std::to_string(jitter));
  }
  if (llt_.info() == Eigen::Success) {
    const double rcond = llt_.rcond();
    condition_ = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  } else {
    a = gram;
    a.diagonal().array() += lambda;
    cod_.emplace(a);
    method_ = "complete-orthogonal";
    condition_ = std::numeric_limits<double>::infinity();
    warnings_.push_back("system is not positive definite; used a rank-revealing least-squares solve");
  }
  if (condition_ > kConditionWarning) {
    warnings_.push_back("ill-conditioned ridge system (estimated condition number " + std::to_string(condition_) +
                        ")");
  }
}

Eigen::VectorXd RidgeSolver::solve(const Eigen::VectorXd& rhs) const {
  return cod_ ? Eigen::VectorXd(cod_->solve(rhs)) : Eigen::VectorXd(llt_.solve(rhs));
}

Eigen::MatrixXd RidgeSolver::solve(const Eigen::MatrixXd& rhs) const {
  return cod_ ? Eigen::MatrixXd(cod_->solve(rhs)) : Eigen::MatrixXd(llt_.solve(rhs));
}

// ---------------------------------------------------------------------------
// Fitting

std::vector<Model> fit_many(const Design& design, const RidgeSolver& solver, std::span<const TargetFn> targets) {
  const auto mom = design.moments(targets);
  const Eigen::MatrixXd coef = solver.solve(mom.cross);
  if (!coef.allFinite()) {
    throw NumericError("ridge solve produced non-finite coefficients");
  }
  const Eigen::MatrixXd& g = design.gram();
  const double lambda = solver.lambda();
  std::vector<Model> out;
  out.reserve(targets.size());
  for (Eigen::Index t = 0; t < coef.cols(); ++t) {
    Model model;
    model.a = coef.col(t);
    model.lambda = lambda;
    model.spec_id = design.map().id();
    const Eigen::VectorXd ga = g * model.a;
    const auto b = mom.cross.col(t);
    auto& diag = model.diagnostics;
    diag.train_loss = std::max(0.0, model.a.dot(ga) - 2.0 * model.a.dot(b) + mom.mean_sq(t));
    diag.objective = diag.train_loss + lambda * model.a.squaredNorm();
    const double bnorm = b.norm();
    diag.residual_norm = (ga + lambda * model.a - b).norm() / (bnorm > 0.0 ? bnorm : 1.0);
    diag.condition_estimate = solver.condition_estimate();
    diag.solver = solver.method();
    diag.warnings = solver.warnings();
    if (design.size() < design.map().dim()) {
      diag.warnings.push_back("fewer synthetic samples than features (N < m)");
    }
    out.push_back(std::move(model));
  }
  return out;
}

std::vector<Model> fit_many(const Design& design, std::span<const TargetFn> targets, double lambda) {
  const RidgeSolver solver(design.gram(), lambda);
  return fit_many(design, solver, targets);
}

Model fit(const Design& design, const TargetFn& f, double lambda) {
  return fit_many(design, std::span<const TargetFn>(&f, 1), lambda).front();
}

double estimate(const Model& model, const PrivateSketch& sketch) {
  if (model.spec_id != sketch.spec_id()) {
    throw ValidationError("model was fitted for feature map " + model.spec_id + " but the sketch uses " +
                          sketch.spec_id());
  }
  const auto s = sketch.normalized();
  return model.a.dot(Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size())));
}

double loss_J(std::span<const double> a, const FeatureMap& map, const TargetFn& f, const Dataset& samples,
              double lambda) {
  if (a.size() != map.dim()) {
    throw ValidationError("coefficient vector length must equal m");
  }
  if (samples.empty()) {
    throw ValidationError("loss needs at least one sample");
  }
  std::vector<double> phi(map.dim());
  double sq = 0.0;
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    map.embed(samples.row(i), phi);
    double pred = 0.0;
    for (std::size_t q = 0; q < phi.size(); ++q) pred += a[q] * phi[q];
    const double r = f(samples.row(i)) - pred;
    sq += r * r;
  }
  double norm2 = 0.0;
  for (const double v : a) norm2 += v * v;
  return sq / static_cast<double>(samples.rows()) + lambda * norm2;
}

// ---------------------------------------------------------------------------
// SketchEstimator

namespace {

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::shared_ptr<const Design> make_design(const PrivateSketch& sketch, const TrainConfig& config) {
  return std::make_shared<const Design>(sketch.map_ptr(),
                                        sample_prior(sketch.map().domain(), config.n_synth, config.seed));
}

}  // namespace

SketchEstimator::SketchEstimator(const PrivateSketch& sketch, const TrainConfig& config)
    : SketchEstimator(sketch, make_design(sketch, config),
                      regularization_lambda(sketch.map(), sketch.epsilon_num(), sketch.noisy_count(),
                                            config.extra_reg)) {}

SketchEstimator::SketchEstimator(const PrivateSketch& sketch, std::shared_ptr<const Design> design, double lambda)
    : sketch_(sketch),
      design_(std::move(design)),
      solver_(design_->gram(), lambda),
      normalized_(to_vector(sketch.normalized())) {
  if (design_->map().id() != sketch.spec_id()) {
    throw ValidationError("design and sketch use different feature maps");
  }
}

std::vector<Model> SketchEstimator::models(std::span<const TargetFn> targets) const {
  return fit_many(*design_, solver_, targets);
}

std::vector<double> SketchEstimator::estimate(std::span<const TargetFn> targets) const {
  const auto mom = design_->moments(targets);
  const Eigen::MatrixXd coef = solver_.solve(mom.cross);
  const Eigen::VectorXd est = coef.transpose() * normalized_;
  return {est.data(), est.data() + est.size()};
}

double SketchEstimator::estimate(const TargetFn& f) const {
  return estimate(std::span<const TargetFn>(&f, 1)).front();
}

double learn_and_estimate(const PrivateSketch& sketch, const TargetFn& f, const TrainConfig& config) {
  return SketchEstimator(sketch, config).estimate(f);
}

}  // namespace m2m
