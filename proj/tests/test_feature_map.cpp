#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "m2m/error.hpp"
#include "m2m/feature_map.hpp"
#include "m2m/rng.hpp"
#include "oracles.hpp"

using namespace m2m;

namespace {

std::vector<double> v(std::initializer_list<double> xs) { return std::vector<double>(xs); }

std::vector<double> random_point(Rng& rng, std::size_t d) {
  std::vector<double> x(d);
  for (auto& c : x) c = uniform01(rng);
  return x;
}

double l1(const std::vector<double>& x) {
  double s = 0.0;
  for (double c : x) s += std::abs(c);
  return s;
}

}  // namespace

TEST(Hist, InteriorPointFallsInItsBin) {
  const auto map = FeatureMap::hist(Domain::unit_box(1), 4);
  EXPECT_EQ(map.embed(v({0.3})), v({0, 1, 0, 0}));
}

TEST(Hist, UpperEdgeClampsIntoLastBin) {
  const auto map = FeatureMap::hist(Domain::unit_box(1), 4);
  EXPECT_EQ(map.embed(v({1.0})), v({0, 0, 0, 1}));
}

TEST(Hist, AttributesAreConcatenated) {
  const auto map = FeatureMap::hist(Domain::unit_box(2), 2);
  EXPECT_EQ(map.embed(v({0.1, 0.9})), v({1, 0, 0, 1}));
}

TEST(Hist, MatchesOracleOnShiftedDomain) {
  const Domain dom({-3.0, 10.0}, {5.0, 12.0}, {AttributeKind::Continuous, AttributeKind::Continuous});
  const auto map = FeatureMap::hist(dom, 7);
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const std::vector<double> x = {-3.0 + 8.0 * uniform01(rng), 10.0 + 2.0 * uniform01(rng)};
    ASSERT_EQ(map.embed(x), oracle::embed(map, x));
  }
}

TEST(Hist, RejectsPointsOutsideDomain) {
  const auto map = FeatureMap::hist(Domain::unit_box(1), 4);
  EXPECT_THROW(map.embed(v({1.2})), ValidationError);
}

TEST(Rff, FrequencyShapeAndVariance) {
  std::vector<double> entries;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto map = FeatureMap::rff(Domain::unit_box(10), 200, 1.0, seed);
    ASSERT_EQ(map.frequencies().rows(), 10);
    ASSERT_EQ(map.frequencies().cols(), 100);
    entries.insert(entries.end(), map.frequencies().data(), map.frequencies().data() + 1000);
  }
  const auto [mean, var] = oracle::mean_var(entries);
  EXPECT_NEAR(var, 1.0, 0.05);
  EXPECT_NEAR(mean, 0.0, 0.03);
}

TEST(Rff, SameSeedSameFrequencies) {
  const auto a = FeatureMap::rff(Domain::unit_box(4), 50 * 2, 1.0, 99);
  const auto b = FeatureMap::rff(Domain::unit_box(4), 50 * 2, 1.0, 99);
  EXPECT_EQ(a.frequencies(), b.frequencies());
  EXPECT_EQ(a.id(), b.id());
  const auto c = FeatureMap::rff(Domain::unit_box(4), 50 * 2, 1.0, 100);
  EXPECT_NE(a.frequencies(), c.frequencies());
}

TEST(Rff, FrequenciesScaleInverselyWithSigma) {
  const auto a = FeatureMap::rff(Domain::unit_box(3), 40, 1.0, 5);
  const auto b = FeatureMap::rff(Domain::unit_box(3), 40, 2.0, 5);
  EXPECT_TRUE(b.frequencies().isApprox(a.frequencies() / 2.0, 1e-14));
}

TEST(Rff, ZeroFrequenciesGiveCosOnesSinZeros) {
  const auto map = FeatureMap::rff_from_frequencies(Domain::unit_box(3), Eigen::MatrixXd::Zero(3, 4), 1.0, 0);
  EXPECT_EQ(map.embed(v({0.2, 0.7, 0.4})), v({1, 1, 1, 1, 0, 0, 0, 0}));
}

TEST(Rff, AnalyticTrig) {
  const auto map = FeatureMap::rff_from_frequencies(Domain::unit_box(1), Eigen::MatrixXd::Constant(1, 1, std::numbers::pi),
                                                    1.0, 0);
  const auto phi = map.embed(v({0.5}));
  ASSERT_EQ(phi.size(), 2u);
  EXPECT_NEAR(phi[0], 0.0, 1e-15);
  EXPECT_NEAR(phi[1], 1.0, 1e-15);
}

TEST(Rff, MatchesOracle) {
  const auto map = FeatureMap::rff(Domain::unit_box(5), 60, 0.7, 8);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto x = random_point(rng, 5);
    const auto got = map.embed(x);
    const auto want = oracle::embed(map, x);
    for (std::size_t k = 0; k < got.size(); ++k) ASSERT_NEAR(got[k], want[k], 1e-12);
  }
}

TEST(Rff, KernelOfIdenticalPointsIsOne) {
  const auto map = FeatureMap::rff(Domain::unit_box(3), 200, 1.0, 2);
  const auto x = v({0.1, 0.5, 0.9});
  EXPECT_NEAR(map.kernel_estimate(x, x), 1.0, 1e-12);
}

TEST(Rff, KernelApproximatesGaussian) {
  const auto map = FeatureMap::rff(Domain({-2.0, -2.0}, {2.0, 2.0}, {AttributeKind::Continuous, AttributeKind::Continuous}),
                                   2000, 1.0, 21);
  EXPECT_NEAR(map.kernel_estimate(v({0.0, 0.0}), v({0.5, 0.0})), std::exp(-0.125), 0.03);
}

TEST(Race, HandEvaluatedHash) {
  Eigen::MatrixXd proj(1, 2);
  proj << 1.0, 0.0;
  const auto map = FeatureMap::race_from_hashes(Domain::unit_box(2), 2, 1.0, proj, Eigen::VectorXd::Zero(1), 0);
  EXPECT_EQ(map.embed(v({0.5, 0.3})), v({1, 0}));
}

TEST(Race, MatchesOracleAndIsOneHotPerRepetition) {
  const auto map = FeatureMap::race(Domain::unit_box(4), 30, 16, 0.1, 4);
  Rng rng(6);
  for (int i = 0; i < 300; ++i) {
    const auto x = random_point(rng, 4);
    const auto phi = map.embed(x);
    ASSERT_EQ(phi, oracle::embed(map, x));
    ASSERT_EQ(l1(phi), 30.0);
  }
}

TEST(Race, CollisionRateIsSymmetricAndSeedStable) {
  const auto a = FeatureMap::race(Domain::unit_box(3), 80, 80, 0.1, 12);
  const auto b = FeatureMap::race(Domain::unit_box(3), 80, 80, 0.1, 12);
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    const auto x = random_point(rng, 3);
    const auto y = random_point(rng, 3);
    ASSERT_EQ(a.kernel_estimate(x, y), a.kernel_estimate(y, x));
    ASSERT_EQ(a.kernel_estimate(x, y), b.kernel_estimate(x, y));
  }
  EXPECT_EQ(a.kernel_estimate(v({0.2, 0.2, 0.2}), v({0.2, 0.2, 0.2})), 1.0);
}

TEST(Race, NearbyPointsCollideMoreThanDistantOnes) {
  const auto map = FeatureMap::race(Domain::unit_box(2), 400, 80, 0.1, 13);
  const double near = map.kernel_estimate(v({0.5, 0.5}), v({0.51, 0.5}));
  const double far = map.kernel_estimate(v({0.5, 0.5}), v({0.9, 0.1}));
  EXPECT_GT(near, far);
}

TEST(Sensitivity, ClosedForms) {
  EXPECT_NEAR(FeatureMap::rff(Domain::unit_box(10), 200, 1.0, 0).sensitivity_l1(), 100.0 * std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(FeatureMap::rff(Domain::unit_box(10), 200, 1.0, 0).sensitivity_l1(), 141.421, 1e-3);
  EXPECT_EQ(FeatureMap::race(Domain::unit_box(10), 80, 80, 0.1, 0).sensitivity_l1(), 80.0);
  EXPECT_EQ(FeatureMap::hist(Domain::unit_box(10), 100).sensitivity_l1(), 10.0);
  EXPECT_EQ(FeatureMap::hist(Domain::unit_box(10), 7).sensitivity_l1(), 10.0);
}

TEST(Sensitivity, BoundsEveryEmbeddedPoint) {
  Rng rng(77);
  const std::vector<FeatureMap> maps = {FeatureMap::hist(Domain::unit_box(5), 10),
                                        FeatureMap::rff(Domain::unit_box(5), 40, 1.0, 1),
                                        FeatureMap::race(Domain::unit_box(5), 20, 10, 0.1, 1)};
  for (const auto& map : maps) {
    for (int i = 0; i < 10000; ++i) {
      const double norm = l1(map.embed(random_point(rng, 5)));
      ASSERT_LE(norm, map.sensitivity_l1() + 1e-12);
      if (map.is_one_hot()) ASSERT_EQ(norm, map.sensitivity_l1());
    }
  }
}

TEST(FeatureMap, OneHotKernelOfIdenticalPointsIsOne) {
  const auto x = v({0.3, 0.6});
  EXPECT_EQ(FeatureMap::hist(Domain::unit_box(2), 10).kernel_estimate(x, x), 1.0);
  EXPECT_EQ(FeatureMap::race(Domain::unit_box(2), 10, 10, 0.1, 3).kernel_estimate(x, x), 1.0);
}

TEST(FeatureMap, RejectsBadParameters) {
  EXPECT_THROW(FeatureMap::rff(Domain::unit_box(2), 7, 1.0, 0), ValidationError);
  EXPECT_THROW(FeatureMap::rff(Domain::unit_box(2), 8, 0.0, 0), ValidationError);
  EXPECT_THROW(FeatureMap::hist(Domain::unit_box(2), 0), ValidationError);
  EXPECT_THROW(FeatureMap::race(Domain::unit_box(2), 0, 4, 0.1, 0), ValidationError);
  EXPECT_THROW(FeatureMap::race(Domain::unit_box(2), 4, 4, -0.1, 0), ValidationError);
}

TEST(FeatureMap, ActiveIndicesMatchDenseEmbedding) {
  const auto map = FeatureMap::race(Domain::unit_box(3), 12, 9, 0.1, 2);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto x = random_point(rng, 3);
    std::vector<std::uint32_t> idx(map.active_count());
    map.active_indices(x, idx);
    std::vector<double> dense(map.dim(), 0.0);
    for (auto k : idx) dense[k] = 1.0;
    ASSERT_EQ(dense, map.embed(x));
  }
}
