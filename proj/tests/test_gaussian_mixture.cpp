#include "gmnds/gaussian_mixture.hpp"

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "gmnds/linalg.hpp"
#include "gmnds/rng.hpp"
#include "support/oracles.hpp"

namespace gmnds {
namespace {

using testing::random_gm;

GaussianMixture scalar_mixture(std::initializer_list<std::array<double, 3>> wmv) {
  std::vector<GaussianComponent> parts;
  for (const auto& [w, m, v] : wmv) {
    parts.push_back({w, Eigen::VectorXd::Constant(1, m), Eigen::MatrixXd::Constant(1, 1, v)});
  }
  return GaussianMixture(std::move(parts));
}

TEST(GaussianMixtureTest, RejectsInvalidInput) {
  EXPECT_THROW(GaussianMixture({}), ArgumentError);
  // weights far from 1
  EXPECT_THROW(scalar_mixture({{0.5, 0.0, 1.0}, {0.4, 1.0, 1.0}}), ArgumentError);
  // negative weight
  EXPECT_THROW(scalar_mixture({{-0.2, 0.0, 1.0}, {1.2, 1.0, 1.0}}), ArgumentError);
  // non-PD covariance
  EXPECT_THROW(scalar_mixture({{1.0, 0.0, -1.0}}), DegenerateCovarianceError);
  // asymmetric covariance
  GaussianComponent c{1.0, Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)};
  c.cov(0, 1) = 0.5;
  EXPECT_THROW(GaussianMixture({c}), ArgumentError);
  // dimension mismatch between components
  GaussianComponent a{0.5, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)};
  GaussianComponent b{0.5, Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)};
  EXPECT_THROW(GaussianMixture({a, b}), ArgumentError);
}

TEST(GaussianMixtureTest, RenormalizesSmallWeightDrift) {
  const double drift = 1.0 + 4e-7;
  GaussianMixture gm = scalar_mixture({{0.5 * drift, 0.0, 1.0}, {0.5 * drift, 1.0, 1.0}});
  double sum = 0.0;
  for (const auto& c : gm.components()) sum += c.weight;
  EXPECT_NEAR(sum, 1.0, 1e-14);
}

TEST(MixtureMomentsTest, SingleComponentIsIdentity) {
  Rng rng = make_rng(11);
  const Eigen::MatrixXd cov = testing::random_spd(rng, 3);
  Eigen::VectorXd mean(3);
  mean << 1.0, -2.0, 0.5;
  GaussianMixture gm({GaussianComponent{1.0, mean, cov}});
  const Moments m = mixture_moments(gm);
  EXPECT_TRUE(m.mean.isApprox(mean, 1e-14));
  EXPECT_TRUE(m.cov.isApprox(cov, 1e-14));
}

TEST(MixtureMomentsTest, SymmetricPairHasVarianceTwo) {
  GaussianMixture gm = scalar_mixture({{0.5, -1.0, 1.0}, {0.5, 1.0, 1.0}});
  const Moments m = mixture_moments(gm);
  EXPECT_NEAR(m.mean[0], 0.0, 1e-15);
  EXPECT_NEAR(m.cov(0, 0), 2.0, 1e-15);
}

TEST(MixtureMomentsTest, MatchesMonteCarloWithinThreeStandardErrors) {
  Rng rng = make_rng(202);
  const GaussianMixture gm = random_gm(rng, 2, 3);
  const Moments m = mixture_moments(gm);

  const int n = 1'000'000;
  const Eigen::MatrixXd draws = sample(gm, n, 7);
  const Eigen::VectorXd mc_mean = draws.rowwise().mean();
  const Eigen::MatrixXd centered = draws.colwise() - mc_mean;
  const Eigen::MatrixXd mc_cov = centered * centered.transpose() / (n - 1);

  for (int i = 0; i < 2; ++i) {
    const double se = std::sqrt(m.cov(i, i) / n);
    EXPECT_NEAR(mc_mean[i], m.mean[i], 3.0 * se);
  }
  // standard error of each covariance entry estimated from the sample fourth
  // moments, so the 3-sigma band is honest for the non-Gaussian mixture
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const Eigen::ArrayXd prod =
          centered.row(i).array() * centered.row(j).array();
      const double var_prod = (prod - prod.mean()).square().sum() / (n - 1);
      const double se = std::sqrt(var_prod / n);
      EXPECT_NEAR(mc_cov(i, j), m.cov(i, j), 3.0 * se);
    }
  }
}

TEST(SampleTest, DeterministicGivenSeed) {
  Rng rng = make_rng(5);
  const GaussianMixture gm = random_gm(rng, 3, 4);
  const Eigen::MatrixXd a = sample(gm, 50, 99);
  const Eigen::MatrixXd b = sample(gm, 50, 99);
  EXPECT_TRUE(a.isApprox(b, 0.0));
  const Eigen::MatrixXd c = sample(gm, 50, 100);
  EXPECT_FALSE(a.isApprox(c, 1e-12));
}

TEST(SampleTest, StandardNormalMeanWithinCltBound) {
  GaussianMixture gm = scalar_mixture({{1.0, 0.0, 1.0}});
  const int n = 1'000'000;
  const Eigen::MatrixXd draws = sample(gm, n, 31);
  EXPECT_LT(std::abs(draws.row(0).mean()), 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST(SampleTest, ComponentSelectionFrequenciesMatchWeights) {
  GaussianMixture gm = scalar_mixture({{0.3, -50.0, 1.0}, {0.7, 50.0, 1.0}});
  const int n = 200'000;
  const Eigen::MatrixXd draws = sample(gm, n, 17);
  const int low = static_cast<int>((draws.row(0).array() < 0.0).count());
  const double p_hat = static_cast<double>(low) / n;
  const double sigma = std::sqrt(0.3 * 0.7 / n);
  EXPECT_NEAR(p_hat, 0.3, 4.0 * sigma);
}

TEST(LogDensityTest, StandardNormalAtOrigin) {
  GaussianMixture gm = scalar_mixture({{1.0, 0.0, 1.0}});
  EXPECT_NEAR(log_density(gm, Eigen::VectorXd::Zero(1)),
              -0.5 * std::log(2.0 * std::numbers::pi), 1e-14);
}

TEST(LogDensityTest, DensityIntegratesToOne) {
  GaussianMixture gm = scalar_mixture({{0.4, -2.0, 0.5}, {0.6, 3.0, 2.0}});
  const double lo = -40.0, hi = 40.0;
  const int n = 200'000;
  const double h = (hi - lo) / n;
  double integral = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double f = std::exp(log_density(gm, Eigen::VectorXd::Constant(1, x)));
    integral += (i == 0 || i == n) ? 0.5 * f : f;
  }
  integral *= h;
  EXPECT_NEAR(integral, 1.0, 1e-6);
}

TEST(LogDensityTest, MatchesExplicitComponentSum) {
  Rng rng = make_rng(404);
  const GaussianMixture gm = random_gm(rng, 3, 4);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (int trial = 0; trial < 25; ++trial) {
    const Eigen::VectorXd x =
        Eigen::VectorXd::NullaryExpr(3, [&](Eigen::Index) { return normal(rng); });
    double direct = 0.0;
    for (const auto& c : gm.components()) {
      direct += c.weight * testing::gaussian_pdf_oracle(x, c.mean, c.cov);
    }
    EXPECT_NEAR(log_density(gm, x), std::log(direct), 1e-12 * std::abs(std::log(direct)) + 1e-13);
  }
}

TEST(MomentMatchedGaussianTest, MatchesMixtureMoments) {
  GaussianMixture pair = scalar_mixture({{0.5, -1.0, 1.0}, {0.5, 1.0, 1.0}});
  const GaussianComponent mm = moment_matched_gaussian(pair);
  EXPECT_EQ(mm.weight, 1.0);
  EXPECT_NEAR(mm.mean[0], 0.0, 1e-15);
  EXPECT_NEAR(mm.cov(0, 0), 2.0, 1e-15);

  Rng rng = make_rng(9);
  const GaussianMixture gm = random_gm(rng, 4, 5);
  const GaussianComponent g = moment_matched_gaussian(gm);
  const Moments m = mixture_moments(gm);
  EXPECT_TRUE(g.mean.isApprox(m.mean, 0.0));
  EXPECT_TRUE(g.cov.isApprox(m.cov, 0.0));

  const GaussianMixture single({g});
  const GaussianComponent same = moment_matched_gaussian(single);
  EXPECT_TRUE(same.mean.isApprox(g.mean, 1e-14));
  EXPECT_TRUE(same.cov.isApprox(g.cov, 1e-12));
}

TEST(CondenseTest, NoOpWhenBelowTarget) {
  Rng rng = make_rng(21);
  const GaussianMixture gm = random_gm(rng, 2, 3);
  const GaussianMixture out = condense(gm, 3);
  EXPECT_EQ(out.size(), 3);
  for (int g = 0; g < 3; ++g) {
    EXPECT_TRUE(out.component(g).mean.isApprox(gm.component(g).mean, 0.0));
  }
}

TEST(CondenseTest, IdenticalPairMergesToSameGaussian) {
  GaussianMixture gm = scalar_mixture({{0.5, 2.0, 1.5}, {0.5, 2.0, 1.5}});
  const GaussianMixture out = condense(gm, 1);
  ASSERT_EQ(out.size(), 1);
  EXPECT_NEAR(out.component(0).weight, 1.0, 1e-15);
  EXPECT_NEAR(out.component(0).mean[0], 2.0, 1e-14);
  EXPECT_NEAR(out.component(0).cov(0, 0), 1.5, 1e-14);
}

TEST(CondenseTest, PreservesMixtureMomentsExactly) {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    Rng rng = make_rng(seed);
    const GaussianMixture gm = random_gm(rng, 3, 10);
    const GaussianMixture out = condense(gm, 4);
    EXPECT_EQ(out.size(), 4);
    const Moments before = mixture_moments(gm);
    const Moments after = mixture_moments(out);
    EXPECT_LT((before.mean - after.mean).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((before.cov - after.cov).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(CondenseTest, ChainToSingleComponentEqualsMomentMatch) {
  Rng rng = make_rng(77);
  const GaussianMixture gm = random_gm(rng, 2, 6);
  const GaussianMixture out = condense(gm, 1);
  ASSERT_EQ(out.size(), 1);
  const GaussianComponent mm = moment_matched_gaussian(gm);
  EXPECT_TRUE(out.component(0).mean.isApprox(mm.mean, 1e-10));
  EXPECT_TRUE(out.component(0).cov.isApprox(mm.cov, 1e-10));
}

TEST(MixtureCovarianceProperty, AlwaysPositiveDefiniteForValidMixtures) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(seed);
    const int dim = 1 + static_cast<int>(seed % 4);
    const GaussianMixture gm = random_gm(rng, dim, 1 + static_cast<int>(seed % 5));
    const Moments m = mixture_moments(gm);
    EXPECT_TRUE(is_symmetric(m.cov));
    EXPECT_NO_THROW(safe_llt(m.cov));
  }
}

}  // namespace
}  // namespace gmnds
