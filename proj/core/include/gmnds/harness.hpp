#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "gmnds/filter.hpp"
#include "gmnds/gaussian_mixture.hpp"
#include "gmnds/hypothesis_test.hpp"

namespace gmnds {

/// Empirical-vs-theoretical CDF comparison on a shared grid.
struct CdfComparison {
  std::vector<double> grid;
  std::vector<double> empirical;
  std::vector<double> theoretical;
  double ks_distance = 0.0;
  int sample_count = 0;
};

/// Kolmogorov-Smirnov sup distance between the empirical CDF of `samples`
/// and a reference CDF, evaluated at the sample jump points.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

struct StaticValidation {
  CdfComparison exact;  ///< against the exact NDS mixture law
  CdfComparison naive;  ///< against the central chi-square of the moment-matched Gaussian
  std::vector<double> statistics;  ///< sorted observed NDS values
};

/// Draws `samples` points from the mixture, evaluates their NDS statistics
/// against the mixture moments, and compares the empirical CDF with both the
/// exact mixture law and the naive central chi-square reference.
StaticValidation validate_static(const GaussianMixture& gm, int samples, std::uint64_t seed,
                                 int grid_points = 201);

struct CoverageReport {
  double alpha = 0.0;
  double tau = 0.0;
  int samples = 0;
  int exceed_count = 0;
  double exceedance = 0.0;
  double ci_low = 0.0;   ///< binomial 2-sigma band around the exceedance
  double ci_high = 0.0;
  double truncation_mass = 0.0;
};

/// Draws joint samples from independent mixtures, sums their NDS statistics,
/// and reports the fraction exceeding the level-alpha threshold of the exact
/// summed law.
CoverageReport validate_sum(std::span<const GaussianMixture> gms, int samples, double alpha,
                            std::uint64_t seed, std::optional<int> top_g = std::nullopt);

struct CalibrationReport {
  int runs = 0;
  int rejections = 0;
  double alpha = 0.0;
  double rejection_rate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double mean_p_value = 0.0;
  std::vector<NdsTestResult> results;
};

/// Repeats consistency_run over independent derived seeds and aggregates the
/// rejection behaviour. `threads` = 0 picks the hardware concurrency; results
/// are identical for any thread count.
CalibrationReport calibrate_filter(const LinearGmModel& model_true,
                                   const LinearGmModel& model_filter, int runs, int steps,
                                   double alpha, double threshold, int max_m,
                                   std::optional<int> top_g, std::uint64_t seed,
                                   ConsistencyMode mode = ConsistencyMode::kState,
                                   int threads = 0);

}  // namespace gmnds
