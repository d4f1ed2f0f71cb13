#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "m2m/dataset.hpp"
#include "m2m/dp_sketch.hpp"
#include "m2m/error.hpp"
#include "m2m/estimator.hpp"
#include "m2m/parallel.hpp"
#include "oracles.hpp"

using namespace m2m;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::shared_ptr<const FeatureMap> share(FeatureMap m) { return std::make_shared<const FeatureMap>(std::move(m)); }

TargetFn component(std::shared_ptr<const FeatureMap> map, std::size_t j) {
  return [map, j](std::span<const double> x) { return map->embed(x)[j]; };
}

std::vector<std::vector<double>> rows_of(const Dataset& d) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < d.rows(); ++i) rows.emplace_back(d.row(i).begin(), d.row(i).end());
  return rows;
}

double mean_of(const Dataset& d, const TargetFn& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < d.rows(); ++i) s += f(d.row(i));
  return s / static_cast<double>(d.rows());
}

}  // namespace

TEST(Prior, UniformMeansAndDeterminism) {
  const Dataset s = sample_prior(Domain::unit_box(2), 100000, 3);
  for (std::size_t j = 0; j < 2; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < s.rows(); ++i) m += s(i, j);
    EXPECT_NEAR(m / 1e5, 0.5, 0.005);
  }
  EXPECT_EQ(s.values(), sample_prior(Domain::unit_box(2), 100000, 3).values());
}

TEST(Prior, BinaryAttributeIsZeroOrOne) {
  const Dataset s = sample_prior(Domain::unit_box_with_label(3), 5000, 4);
  double ones = 0.0;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    ASSERT_TRUE(s(i, 2) == 0.0 || s(i, 2) == 1.0);
    ones += s(i, 2);
  }
  EXPECT_NEAR(ones / 5000.0, 0.5, 0.03);
}

TEST(Lambda, NoiseRule) {
  const auto map = FeatureMap::rff(Domain::unit_box(10), 200, 1.0, 0);
  EXPECT_NEAR(regularization_lambda(map, 0.98, 27000, 1.0), 2.0 * 20000.0 / (0.9604 * 27000.0), 1e-12);
  EXPECT_NEAR(regularization_lambda(map, 0.98, 27000, 1.0), 1.5426, 1e-4);
  EXPECT_NEAR(regularization_lambda(map, 0.98, 54000, 1.0), regularization_lambda(map, 0.98, 27000, 1.0) / 2.0, 1e-12);
  EXPECT_NEAR(regularization_lambda(map, 0.98, 27000, 3.0), 3.0 * regularization_lambda(map, 0.98, 27000, 1.0), 1e-12);
  EXPECT_EQ(regularization_lambda(map, kInf, 27000, 1.0), kLambdaFloor);
  EXPECT_EQ(regularization_lambda(map, 0.98, -5.0, 1.0), regularization_lambda(map, 0.98, 1.0, 1.0));
}

TEST(Lambda, TheoremVariantUsesSquaredCount) {
  const auto map = FeatureMap::hist(Domain::unit_box(2), 5);
  EXPECT_NEAR(bound_lambda(map, 0.5, 50), noise_variance(map, 0.5) / 2500.0, 1e-15);
  EXPECT_NEAR(noise_variance(map, 0.5), 2.0 * 4.0 / 0.25, 1e-12);
}

TEST(Fit, SingleComponentIsRecovered) {
  const auto map = share(FeatureMap::rff(Domain::unit_box(3), 20, 1.0, 5));
  const Design design(map, sample_prior(map->domain(), 200, 6));
  for (std::size_t j = 0; j < map->dim(); j += 7) {
    const Model model = fit(design, component(map, j), 1e-9);
    EXPECT_LT(model.diagnostics.train_loss, 1e-6);
  }
}

TEST(Fit, SingleHistComponentIsInSpan) {
  const auto map = share(FeatureMap::hist(Domain::unit_box(2), 5));
  const Design design(map, sample_prior(map->domain(), 100, 6));
  const Model model = fit(design, component(map, 3), 1e-9);
  EXPECT_LT(model.diagnostics.train_loss, 1e-12);
}

TEST(Fit, ZeroTargetGivesZeroCoefficients) {
  const auto map = share(FeatureMap::rff(Domain::unit_box(2), 10, 1.0, 1));
  const Design design(map, sample_prior(map->domain(), 200, 2));
  const Model model = fit(design, [](std::span<const double>) { return 0.0; }, 1e-3);
  EXPECT_TRUE((model.a.array() == 0.0).all());
}

TEST(Fit, HistBinUnionIsInSpan) {
  const auto map = share(FeatureMap::hist(Domain::unit_box(3), 10));
  const Design design(map, sample_prior(map->domain(), 3000, 9));
  const TargetFn f = [](std::span<const double> x) { return (x[1] < 0.3 || (x[1] >= 0.6 && x[1] < 0.8)) ? 1.0 : 0.0; };
  const Model model = fit(design, f, 1e-9);
  EXPECT_LT(model.diagnostics.train_loss, 1e-8);
}

TEST(Fit, MatchesOracleRidge) {
  const auto map = share(FeatureMap::rff(Domain::unit_box(3), 16, 1.0, 11));
  const Dataset samples = sample_prior(map->domain(), 500, 12);
  const Design design(map, samples);
  const TargetFn f = [](std::span<const double> x) { return x[0] * x[1] + std::sin(3.0 * x[2]); };
  const Eigen::MatrixXd p = oracle::features(*map, rows_of(samples));
  Eigen::VectorXd fv(static_cast<Eigen::Index>(samples.rows()));
  for (std::size_t i = 0; i < samples.rows(); ++i) fv(static_cast<Eigen::Index>(i)) = f(samples.row(i));
  for (double lambda : {1e-1, 1e-3, 1e-5}) {
    const Model model = fit(design, f, lambda);
    const Eigen::VectorXd want = oracle::ridge(p, fv, lambda);
    EXPECT_LT((model.a - want).norm(), 1e-7 * std::max(1.0, want.norm())) << lambda;
  }
}

TEST(Fit, NormalEquationsHold) {
  const auto map = share(FeatureMap::race(Domain::unit_box(3), 10, 8, 0.2, 4));
  const Design design(map, sample_prior(map->domain(), 2000, 5));
  const TargetFn f = [](std::span<const double> x) { return x[0] * x[0]; };
  for (double lambda : {1e-9, 1e-4, 1.0}) {
    const Model model = fit(design, f, lambda);
    EXPECT_LT(model.diagnostics.residual_norm, 1e-8) << lambda;
    EXPECT_EQ(model.lambda, lambda);
    EXPECT_EQ(model.spec_id, map->id());
  }
}

TEST(Fit, ShrinkageIsMonotoneInLambda) {
  const auto map = share(FeatureMap::rff(Domain::unit_box(2), 30, 1.0, 2));
  const Design design(map, sample_prior(map->domain(), 1000, 3));
  const TargetFn f = [](std::span<const double> x) { return x[0] > 0.5 ? 1.0 : 0.0; };
  double previous = std::numeric_limits<double>::infinity();
  for (double lambda : {1e-8, 1e-6, 1e-4, 1e-2, 1.0, 100.0}) {
    const double norm = fit(design, f, lambda).a.norm();
    EXPECT_LE(norm, previous * (1.0 + 1e-9)) << lambda;
    previous = norm;
  }
}

TEST(Fit, BatchEqualsIndividualFits) {
  const auto map = share(FeatureMap::rff(Domain::unit_box(2), 12, 1.0, 6));
  const Design design(map, sample_prior(map->domain(), 400, 7));
  const std::vector<TargetFn> fs = {[](std::span<const double> x) { return x[0]; },
                                    [](std::span<const double> x) { return x[1] * x[1]; }};
  const auto batch = fit_many(design, fs, 1e-4);
  for (std::size_t t = 0; t < fs.size(); ++t) EXPECT_LT((batch[t].a - fit(design, fs[t], 1e-4).a).norm(), 1e-10);
}

TEST(LossJ, ZeroCoefficientsAgainstConstantOne) {
  const auto map = FeatureMap::hist(Domain::unit_box(2), 3);
  const std::vector<double> a(map.dim(), 0.0);
  EXPECT_DOUBLE_EQ(loss_J(a, map, [](std::span<const double>) { return 1.0; }, gen_random10(50, 2, 1), 0.7), 1.0);
}

TEST(LossJ, AgreesWithFitObjective) {
  const auto map = share(FeatureMap::rff(Domain::unit_box(2), 10, 1.0, 3));
  const Dataset samples = sample_prior(map->domain(), 300, 4);
  const Design design(map, samples);
  const TargetFn f = [](std::span<const double> x) { return x[0] - x[1]; };
  const Model model = fit(design, f, 1e-3);
  const std::vector<double> a(model.a.data(), model.a.data() + model.a.size());
  EXPECT_NEAR(loss_J(a, *map, f, samples, 1e-3), model.diagnostics.objective, 1e-10);
}

TEST(Estimate, BasisVectorPicksSketchEntry) {
  const auto map = share(FeatureMap::hist(Domain::unit_box(1), 4));
  const auto sketch = privatize(sketch_exact(*map, Dataset(1, std::vector<double>{0.3, 0.9, 0.95, 0.1})), map, kInf, 0.98, 0);
  Model model;
  model.spec_id = map->id();
  model.a = Eigen::VectorXd::Zero(4);
  model.a(3) = 1.0;
  EXPECT_DOUBLE_EQ(estimate(model, sketch), 0.5);
  model.a.setZero();
  EXPECT_EQ(estimate(model, sketch), 0.0);
}

TEST(Estimate, ExactRecoveryForSpanTargets) {
  const auto map = share(FeatureMap::rff(Domain::unit_box(3), 20, 1.0, 8));
  const Dataset data = gen_random10(1000, 3, 9);
  const auto sketch = privatize(sketch_exact(*map, data), map, kInf, 0.98, 0);
  const TrainConfig config{2000, 1.0, 10};
  for (std::size_t j : {0u, 5u, 13u}) {
    const TargetFn f = component(map, j);
    EXPECT_LT(std::abs(learn_and_estimate(sketch, f, config) - mean_of(data, f)), 1e-6);
  }
}

TEST(Estimate, UniformMeanIsCloseToHalf) {
  const auto map = share(FeatureMap::rff(Domain::unit_box(4), 200, 1.0, 8));
  const Dataset data = gen_random10(5000, 4, 9);
  const auto sketch = privatize(sketch_exact(*map, data), map, kInf, 0.98, 0);
  const TargetFn f = [](std::span<const double> x) { return x[0]; };
  EXPECT_NEAR(learn_and_estimate(sketch, f, {20000, 1.0, 1}), mean_of(data, f), 1e-2);
}

TEST(Estimate, BitwiseReproducibleAcrossThreadCounts) {
  const auto map = share(FeatureMap::rff(Domain::unit_box(3), 100, 1.0, 8));
  const auto sketch = privatize(sketch_exact(*map, gen_random10(3000, 3, 1)), map, 1.0, 0.98, 5);
  const TargetFn f = [](std::span<const double> x) { return x[1] * x[2]; };
  set_thread_count(1);
  const double a = learn_and_estimate(sketch, f, {5000, 1.0, 3});
  set_thread_count(6);
  const double b = learn_and_estimate(sketch, f, {5000, 1.0, 3});
  set_thread_count(0);
  EXPECT_EQ(a, b);
}

TEST(Estimate, RejectsForeignModel) {
  const auto map = share(FeatureMap::hist(Domain::unit_box(1), 4));
  const auto sketch = privatize(sketch_exact(*map, Dataset(1, std::vector<double>{0.3})), map, kInf, 0.98, 0);
  Model model;
  model.spec_id = "0000000000000000";
  model.a = Eigen::VectorXd::Zero(4);
  EXPECT_THROW(estimate(model, sketch), ValidationError);
}

TEST(Solver, FallsBackOnSingularSystem) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(3, 3);
  g(0, 0) = 1.0;
  const RidgeSolver solver(g, 0.0);
  EXPECT_NE(solver.method(), "cholesky");
  const Eigen::VectorXd a = solver.solve(Eigen::VectorXd(Eigen::VectorXd::Unit(3, 0)));
  EXPECT_NEAR(a(0), 1.0, 1e-6);
  EXPECT_TRUE(a.allFinite());
}
