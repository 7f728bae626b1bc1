#include "gmnds/filter.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "gmnds/nds.hpp"
#include "gmnds/rng.hpp"
#include "support/oracles.hpp"

namespace gmnds {
namespace {

GaussianMixture scalar_mixture(std::initializer_list<std::array<double, 3>> wmv) {
  std::vector<GaussianComponent> parts;
  for (const auto& [w, m, v] : wmv) {
    parts.push_back({w, Eigen::VectorXd::Constant(1, m), Eigen::MatrixXd::Constant(1, 1, v)});
  }
  return GaussianMixture(std::move(parts));
}

LinearGmModel random_walk_model(GaussianMixture prior, GaussianMixture process,
                                GaussianMixture meas, int g_max) {
  return LinearGmModel(Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd(),
                       Eigen::MatrixXd::Identity(1, 1), std::move(prior), std::move(process),
                       std::move(meas), g_max);
}

LinearGmModel single_gaussian_model() {
  return random_walk_model(scalar_mixture({{1.0, 0.0, 2.0}}), scalar_mixture({{1.0, 0.3, 0.5}}),
                           scalar_mixture({{1.0, -0.2, 1.0}}), 1);
}

// the qualitative shape of the localization example: 5-component prior and
// noise mixtures, posterior condensed to 10
LinearGmModel five_component_model(int g_max = 10) {
  GaussianMixture prior = scalar_mixture(
      {{0.3, 0.0, 1.0}, {0.2, -3.0, 0.5}, {0.2, 3.0, 0.5}, {0.15, -6.0, 1.5}, {0.15, 6.0, 1.5}});
  GaussianMixture process = scalar_mixture(
      {{0.4, 0.0, 0.3}, {0.2, -0.8, 0.2}, {0.2, 0.8, 0.2}, {0.1, -2.0, 0.4}, {0.1, 2.0, 0.4}});
  GaussianMixture meas = scalar_mixture(
      {{0.5, 0.0, 0.5}, {0.15, -4.0, 1.0}, {0.15, 4.0, 1.0}, {0.1, -8.0, 2.0}, {0.1, 8.0, 2.0}});
  return random_walk_model(std::move(prior), std::move(process), std::move(meas), g_max);
}

TEST(LinearGmModelTest, ValidatesDimensions) {
  GaussianMixture prior = scalar_mixture({{1.0, 0.0, 1.0}});
  GaussianMixture process = scalar_mixture({{1.0, 0.0, 1.0}});
  GaussianMixture meas = scalar_mixture({{1.0, 0.0, 1.0}});
  EXPECT_THROW(LinearGmModel(Eigen::MatrixXd::Identity(2, 2), {}, Eigen::MatrixXd::Identity(1, 1),
                             prior, process, meas, 1),
               ArgumentError);
  EXPECT_THROW(LinearGmModel(Eigen::MatrixXd::Identity(1, 1), {}, Eigen::MatrixXd::Identity(1, 1),
                             prior, process, meas, 0),
               ArgumentError);
  EXPECT_NO_THROW(single_gaussian_model());
}

TEST(TimeUpdateTest, SingleGaussianIsKalmanPrediction) {
  const LinearGmModel model = single_gaussian_model();
  const GaussianMixture out = time_update(model.prior, model, {});
  ASSERT_EQ(out.size(), 1);
  EXPECT_NEAR(out.component(0).mean[0], 0.0 + 0.3, 1e-14);
  EXPECT_NEAR(out.component(0).cov(0, 0), 2.0 + 0.5, 1e-14);
}

TEST(TimeUpdateTest, ComponentCountingAndWeights) {
  GaussianMixture post = scalar_mixture({{0.6, -1.0, 1.0}, {0.4, 2.0, 0.5}});
  GaussianMixture process =
      scalar_mixture({{0.5, 0.0, 0.2}, {0.3, 1.0, 0.3}, {0.2, -1.0, 0.4}});
  LinearGmModel model = random_walk_model(scalar_mixture({{1.0, 0.0, 1.0}}), process,
                                          scalar_mixture({{1.0, 0.0, 1.0}}), 10);
  const GaussianMixture out = time_update(post, model, {});
  EXPECT_EQ(out.size(), 6);
  double sum = 0.0;
  for (const auto& c : out.components()) sum += c.weight;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(TimeUpdateTest, LawOfTotalMoments) {
  Rng rng = make_rng(15);
  const GaussianMixture post = testing::random_gm(rng, 2, 3);
  const GaussianMixture process = testing::random_gm(rng, 2, 2);
  Eigen::MatrixXd f(2, 2);
  f << 0.9, 0.2, -0.1, 0.8;
  LinearGmModel model(f, Eigen::MatrixXd(), Eigen::MatrixXd::Identity(2, 2),
                      testing::random_gm(rng, 2, 1), process, testing::random_gm(rng, 2, 1), 10);

  const Moments post_m = mixture_moments(post);
  const Moments proc_m = mixture_moments(process);
  const Moments out = mixture_moments(time_update(post, model, {}));
  EXPECT_TRUE(out.mean.isApprox(f * post_m.mean + proc_m.mean, 1e-10));
  EXPECT_TRUE(out.cov.isApprox(f * post_m.cov * f.transpose() + proc_m.cov, 1e-10));
}

TEST(MeasurementUpdateTest, SingleGaussianIsKalmanUpdate) {
  const LinearGmModel model = single_gaussian_model();
  const GaussianMixture prior = scalar_mixture({{1.0, 1.0, 2.5}});
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 2.0);
  const MeasurementUpdate mu = measurement_update(prior, model, y);

  const double s = 2.5 + 1.0;
  const double k = 2.5 / s;
  const double innov = 2.0 - 1.0 - (-0.2);
  ASSERT_EQ(mu.posterior.size(), 1);
  EXPECT_NEAR(mu.posterior.component(0).mean[0], 1.0 + k * innov, 1e-12);
  EXPECT_NEAR(mu.posterior.component(0).cov(0, 0), (1.0 - k) * 2.5, 1e-12);
  ASSERT_EQ(mu.predicted_meas.size(), 1);
  EXPECT_NEAR(mu.predicted_meas.component(0).mean[0], 0.8, 1e-12);
  EXPECT_NEAR(mu.predicted_meas.component(0).cov(0, 0), s, 1e-12);
}

TEST(MeasurementUpdateTest, WeightsNormalized) {
  const LinearGmModel model = five_component_model();
  const GaussianMixture prior = time_update(model.prior, model, {});
  const MeasurementUpdate mu =
      measurement_update(prior, model, Eigen::VectorXd::Constant(1, 1.3));
  double sum = 0.0;
  for (const auto& c : mu.posterior.components()) sum += c.weight;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_EQ(mu.posterior.size(), prior.size() * model.meas_noise.size());
}

TEST(MeasurementUpdateTest, GridBayesOracle) {
  GaussianMixture prior = scalar_mixture({{0.55, -1.5, 0.8}, {0.45, 2.0, 1.4}});
  GaussianMixture meas = scalar_mixture({{0.7, 0.0, 0.6}, {0.3, 3.0, 1.2}});
  LinearGmModel model = random_walk_model(scalar_mixture({{1.0, 0.0, 1.0}}),
                                          scalar_mixture({{1.0, 0.0, 1.0}}), meas, 10);
  const double y = 0.7;
  const MeasurementUpdate mu =
      measurement_update(prior, model, Eigen::VectorXd::Constant(1, y));

  // numerically normalized pointwise product prior(x) * lik(y|x)
  const double lo = -12.0, hi = 14.0;
  const int n = 40'000;
  const double h = (hi - lo) / n;
  std::vector<double> product(static_cast<std::size_t>(n) + 1);
  double norm_const = 0.0;
  auto likelihood = [&](double x) {
    double lik = 0.0;
    for (const auto& c : meas.components()) {
      const double d = y - x - c.mean[0];
      lik += c.weight * std::exp(-0.5 * d * d / c.cov(0, 0)) /
             std::sqrt(2.0 * std::numbers::pi * c.cov(0, 0));
    }
    return lik;
  };
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double val =
        std::exp(log_density(prior, Eigen::VectorXd::Constant(1, x))) * likelihood(x);
    product[static_cast<std::size_t>(i)] = val;
    norm_const += (i == 0 || i == n) ? 0.5 * val : val;
  }
  norm_const *= h;

  for (int i = 0; i <= n; i += 2500) {
    const double x = lo + i * h;
    const double expected = product[static_cast<std::size_t>(i)] / norm_const;
    const double actual = std::exp(log_density(mu.posterior, Eigen::VectorXd::Constant(1, x)));
    EXPECT_NEAR(actual, expected, 1e-8) << "x=" << x;
  }
}

TEST(StepTest, CondensationIdentityWhenUnderCap) {
  LinearGmModel model = random_walk_model(scalar_mixture({{1.0, 0.0, 2.0}}),
                                          scalar_mixture({{1.0, 0.0, 0.5}}),
                                          scalar_mixture({{1.0, 0.0, 1.0}}), 50);
  GmFilter filter(model);
  filter.step(Eigen::VectorXd::Constant(1, 0.4));
  EXPECT_EQ(filter.posterior().size(), 1);
}

TEST(StepTest, ComponentCapHolds) {
  const LinearGmModel model = five_component_model(10);
  GmFilter filter(model);
  Rng rng = make_rng(3);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (int k = 0; k < 12; ++k) {
    filter.step(Eigen::VectorXd::Constant(1, normal(rng)));
    EXPECT_LE(filter.posterior().size(), 10);
    double sum = 0.0;
    for (const auto& c : filter.posterior().components()) sum += c.weight;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  EXPECT_EQ(filter.trace().steps.size(), 12u);
}

TEST(StepTest, CondensationPreservesMmseMoments) {
  const LinearGmModel model = five_component_model(10);
  GaussianMixture posterior = model.prior;
  Rng rng = make_rng(4);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (int k = 0; k < 5; ++k) {
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, normal(rng));
    const GaussianMixture pred = time_update(posterior, model, {});
    const MeasurementUpdate mu = measurement_update(pred, model, y);
    const Moments before = mixture_moments(mu.posterior);
    posterior = condense(mu.posterior, model.g_max);
    const Moments after = mixture_moments(posterior);
    EXPECT_LT((before.mean - after.mean).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((before.cov - after.cov).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(SimulateTruthTest, DeterministicAndNearDeterministicLimits) {
  const LinearGmModel model = single_gaussian_model();
  const Simulation a = simulate_truth(model, 30, 12);
  const Simulation b = simulate_truth(model, 30, 12);
  ASSERT_EQ(a.states.size(), 31u);
  ASSERT_EQ(a.measurements.size(), 30u);
  for (std::size_t i = 0; i < a.states.size(); ++i) {
    EXPECT_DOUBLE_EQ(a.states[i][0], b.states[i][0]);
  }

  // near-zero covariances: the trajectory follows the deterministic recursion
  LinearGmModel tight = random_walk_model(scalar_mixture({{1.0, 1.0, 1e-16}}),
                                          scalar_mixture({{1.0, 0.25, 1e-16}}),
                                          scalar_mixture({{1.0, 0.0, 1e-16}}), 1);
  const Simulation s = simulate_truth(tight, 20, 5);
  for (int k = 0; k <= 20; ++k) {
    EXPECT_NEAR(s.states[static_cast<std::size_t>(k)][0], 1.0 + 0.25 * k, 1e-6);
  }
}

TEST(SimulateTruthTest, IncrementMomentsMatchProcessNoise) {
  const LinearGmModel model = five_component_model();
  const Simulation s = simulate_truth(model, 10'000, 77);
  const Moments proc = mixture_moments(model.process_noise);
  double acc = 0.0, acc2 = 0.0;
  for (std::size_t k = 1; k < s.states.size(); ++k) {
    const double inc = s.states[k][0] - s.states[k - 1][0];
    acc += inc;
    acc2 += inc * inc;
  }
  const double n = static_cast<double>(s.states.size() - 1);
  const double mc_mean = acc / n;
  const double mc_var = acc2 / n - mc_mean * mc_mean;
  EXPECT_NEAR(mc_mean, proc.mean[0], 4.0 * std::sqrt(proc.cov(0, 0) / n));
  // loose 4-sigma-style band for the second moment
  EXPECT_NEAR(mc_var, proc.cov(0, 0), 4.0 * proc.cov(0, 0) * std::sqrt(2.0 / n));
}

FilterTrace synthetic_trace(const std::vector<double>& truth_offsets) {
  FilterTrace trace;
  trace.truth.push_back(Eigen::VectorXd::Zero(1));  // x_0
  for (double e : truth_offsets) {
    FilterStep step{scalar_mixture({{1.0, 0.0, 1.0}}), Eigen::VectorXd::Zero(1),
                    Eigen::MatrixXd::Constant(1, 1, 4.0), scalar_mixture({{1.0, 0.0, 1.0}})};
    trace.steps.push_back(std::move(step));
    trace.truth.push_back(Eigen::VectorXd::Constant(1, e));
    trace.measurements.push_back(Eigen::VectorXd::Constant(1, e));
  }
  return trace;
}

TEST(ErrorSeriesTest, IdentityOnHandBuiltTrace) {
  const FilterTrace trace = synthetic_trace({0.5, -1.0, 2.0});
  const ErrorSeries es = error_series(trace);
  ASSERT_EQ(es.errors.size(), 3u);
  EXPECT_DOUBLE_EQ(es.errors[0][0], 0.5);
  EXPECT_DOUBLE_EQ(es.errors[1][0], -1.0);
  EXPECT_DOUBLE_EQ(es.errors[2][0], 2.0);
  for (const auto& b : es.two_sigma) {
    EXPECT_DOUBLE_EQ(b[0], 2.0 * 2.0);  // 2 sqrt(4)
  }
}

TEST(ErrorSeriesTest, MatchesIndependentRecomputation) {
  const LinearGmModel model = five_component_model();
  Simulation sim = simulate_truth(model, 40, 21);
  FilterTrace trace = run_filter(model, sim.measurements);
  trace.truth = sim.states;
  const ErrorSeries es = error_series(trace);
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    const Moments m = mixture_moments(trace.steps[k].posterior);
    EXPECT_NEAR(es.errors[k][0], sim.states[k + 1][0] - m.mean[0], 1e-12);
    EXPECT_NEAR(es.two_sigma[k][0], 2.0 * std::sqrt(m.cov(0, 0)), 1e-12);
  }
  FilterTrace no_truth = run_filter(model, sim.measurements);
  EXPECT_THROW(error_series(no_truth), ArgumentError);
}

TEST(AutocorrelationTest, LagZeroIsOne) {
  std::vector<double> series{1.0, 2.0, -1.0, 0.5, 3.0};
  const std::vector<double> rho = autocorrelation(series, 2);
  EXPECT_DOUBLE_EQ(rho[0], 1.0);
}

TEST(AutocorrelationTest, WhiteNoiseDecorrelated) {
  Rng rng = make_rng(101);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> series(10'000);
  for (double& v : series) v = normal(rng);
  const std::vector<double> rho = autocorrelation(series, 20);
  for (int lag = 1; lag <= 20; ++lag) {
    EXPECT_LT(std::abs(rho[static_cast<std::size_t>(lag)]), 0.04) << "lag=" << lag;
  }
}

TEST(AutocorrelationTest, Ar1RecoversCoefficient) {
  Rng rng = make_rng(102);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> series(10'000);
  double x = 0.0;
  for (double& v : series) {
    x = 0.5 * x + normal(rng);
    v = x;
  }
  const std::vector<double> rho = autocorrelation(series, 3);
  EXPECT_NEAR(rho[1], 0.5, 0.05);
}

TEST(AutocorrelationTest, RejectsDegenerateInput) {
  std::vector<double> constant(100, 3.0);
  EXPECT_THROW(autocorrelation(constant, 5), ArgumentError);
  std::vector<double> tiny{1.0, 2.0};
  EXPECT_THROW(autocorrelation(tiny, 5), ArgumentError);
}

TEST(SelectTestStepsTest, WhiteNoiseErrorGivesUnitSpacing) {
  Rng rng = make_rng(103);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> offsets(2'000);
  for (double& v : offsets) v = normal(rng);
  const FilterTrace trace = synthetic_trace(offsets);
  const std::vector<int> steps = select_test_steps(trace, 0.1, 5);
  ASSERT_EQ(steps.size(), 5u);
  EXPECT_EQ(steps[0], 1);
  EXPECT_EQ(steps[4], 5);
}

TEST(SelectTestStepsTest, ZeroThresholdFails) {
  Rng rng = make_rng(104);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> offsets(500);
  for (double& v : offsets) v = normal(rng);
  const FilterTrace trace = synthetic_trace(offsets);
  EXPECT_THROW(select_test_steps(trace, 0.0, 5), NumericalError);
}

TEST(SelectTestStepsTest, NominalRunReachesSmallSpacing) {
  // lighter mixture shapes so a long run stays cheap; the filter error series
  // decorrelates within a few steps, and the 0.02 threshold needs a long
  // series to climb above the autocorrelation estimation noise floor
  GaussianMixture prior = scalar_mixture({{0.6, 0.0, 1.0}, {0.4, 2.0, 1.0}});
  GaussianMixture process = scalar_mixture({{0.8, 0.0, 0.6}, {0.2, 0.4, 0.8}});
  GaussianMixture meas = scalar_mixture({{0.9, 0.0, 0.5}, {0.1, -1.5, 0.8}});
  const LinearGmModel model =
      random_walk_model(std::move(prior), std::move(process), std::move(meas), 4);
  Simulation sim = simulate_truth(model, 30'000, 11);
  FilterTrace trace = run_filter(model, sim.measurements);
  trace.truth = sim.states;
  const std::vector<int> steps = select_test_steps(trace, 0.02, 8);
  ASSERT_FALSE(steps.empty());
  const int spacing = steps[0];
  EXPECT_LE(spacing, 10);
  for (std::size_t i = 1; i < steps.size(); ++i) {
    EXPECT_EQ(steps[i] - steps[i - 1], spacing);
  }
}

TEST(ConsistencyRunTest, DeterministicAndInternallyConsistent) {
  const LinearGmModel model = five_component_model();
  const NdsTestResult a =
      consistency_run(model, model, 60, 0.05, 0.3, 4, 256, 42, ConsistencyMode::kState);
  const NdsTestResult b =
      consistency_run(model, model, 60, 0.05, 0.3, 4, 256, 42, ConsistencyMode::kState);
  EXPECT_DOUBLE_EQ(a.statistic, b.statistic);
  EXPECT_DOUBLE_EQ(a.tau, b.tau);
  EXPECT_EQ(a.reject, b.reject);
  EXPECT_EQ(a.reject, a.statistic >= a.tau);
  EXPECT_GE(a.statistic, 0.0);
}

TEST(ConsistencyRunTest, SingleStepModeWorks) {
  const LinearGmModel model = five_component_model();
  const NdsTestResult r =
      consistency_run(model, model, 40, 0.05, 0.3, 1, std::nullopt, 7, ConsistencyMode::kState);
  EXPECT_GE(r.p_value, 0.0);
  EXPECT_LE(r.p_value, 1.0);
  EXPECT_EQ(r.truncation_mass, 0.0);
}

TEST(ConsistencyRunTest, MeasurementModeWorks) {
  const LinearGmModel model = five_component_model();
  const NdsTestResult r =
      consistency_run(model, model, 60, 0.05, 0.3, 3, 256, 11, ConsistencyMode::kMeasurement);
  EXPECT_EQ(r.reject, r.statistic >= r.tau);
}

TEST(KalmanDegeneracy, SingleGaussianFilterMatchesReferenceKalman) {
  const LinearGmModel model = single_gaussian_model();
  const Simulation sim = simulate_truth(model, 100, 33);
  const FilterTrace trace = run_filter(model, sim.measurements);

  const testing::KalmanTrace ref = testing::reference_kalman(
      model.F, model.H, model.prior.component(0).mean, model.prior.component(0).cov,
      model.process_noise.component(0).mean, model.process_noise.component(0).cov,
      model.meas_noise.component(0).mean, model.meas_noise.component(0).cov, sim.measurements);

  ASSERT_EQ(trace.steps.size(), ref.means.size());
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    EXPECT_LT((trace.steps[k].mmse_mean - ref.means[k]).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((trace.steps[k].mmse_cov - ref.covs[k]).cwiseAbs().maxCoeff(), 1e-10);
  }
}

}  // namespace
}  // namespace gmnds
