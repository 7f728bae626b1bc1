#include "gmnds/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include <Eigen/Cholesky>

#include "gmnds/linalg.hpp"
#include "gmnds/nds.hpp"
#include "gmnds/rng.hpp"

namespace gmnds {

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw ArgumentError("ks_statistic: no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::abs((static_cast<double>(i) + 1.0) / n - f));
    d = std::max(d, std::abs(static_cast<double>(i) / n - f));
  }
  return d;
}

namespace {

CdfComparison compare_cdf(const std::vector<double>& sorted_stats,
                          const std::function<double(double)>& cdf, int grid_points) {
  CdfComparison out;
  out.sample_count = static_cast<int>(sorted_stats.size());
  out.ks_distance = ks_statistic(sorted_stats, cdf);

  const double lo = 0.0;
  const double hi = sorted_stats.back();
  out.grid.reserve(static_cast<std::size_t>(grid_points));
  out.empirical.reserve(static_cast<std::size_t>(grid_points));
  out.theoretical.reserve(static_cast<std::size_t>(grid_points));
  const double n = static_cast<double>(sorted_stats.size());
  for (int i = 0; i < grid_points; ++i) {
    const double x = lo + (hi - lo) * i / (grid_points - 1);
    const auto below =
        std::upper_bound(sorted_stats.begin(), sorted_stats.end(), x) - sorted_stats.begin();
    out.grid.push_back(x);
    out.empirical.push_back(static_cast<double>(below) / n);
    out.theoretical.push_back(cdf(x));
  }
  return out;
}

}  // namespace

StaticValidation validate_static(const GaussianMixture& gm, int samples, std::uint64_t seed,
                                 int grid_points) {
  if (samples < 2) throw ArgumentError("validate_static: need at least 2 samples");
  if (grid_points < 2) throw ArgumentError("validate_static: need at least 2 grid points");

  const Moments m = mixture_moments(gm);
  const auto llt = safe_llt(m.cov, "mixture covariance");

  const Eigen::MatrixXd draws = sample(gm, samples, seed);
  std::vector<double> stats(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    stats[static_cast<std::size_t>(i)] =
        llt.matrixL().solve(draws.col(i) - m.mean).squaredNorm();
  }
  std::sort(stats.begin(), stats.end());

  const GenChi2Mixture dist = gm_nds_dist(gm);
  const MixtureCdf exact_cdf(dist);
  const double dof = static_cast<double>(gm.dim());

  StaticValidation out;
  out.exact = compare_cdf(stats, [&](double x) { return exact_cdf(x); }, grid_points);
  out.naive = compare_cdf(stats, [&](double x) { return chi_square_cdf(dof, x); }, grid_points);
  out.statistics = std::move(stats);
  return out;
}

CoverageReport validate_sum(std::span<const GaussianMixture> gms, int samples, double alpha,
                            std::uint64_t seed, std::optional<int> top_g) {
  if (samples < 1) throw ArgumentError("validate_sum: need at least 1 sample");

  const GenChi2Mixture dist = sum_nds_dist(gms, top_g);
  const double tau = critical_threshold(dist, alpha);

  std::vector<double> q(static_cast<std::size_t>(samples), 0.0);
  for (std::size_t c = 0; c < gms.size(); ++c) {
    const Moments m = mixture_moments(gms[c]);
    const auto llt = safe_llt(m.cov, "mixture covariance");
    const Eigen::MatrixXd draws =
        sample(gms[c], samples, substream_seed(seed, static_cast<std::uint64_t>(c)));
    for (int i = 0; i < samples; ++i) {
      q[static_cast<std::size_t>(i)] +=
          llt.matrixL().solve(draws.col(i) - m.mean).squaredNorm();
    }
  }

  CoverageReport r;
  r.alpha = alpha;
  r.tau = tau;
  r.samples = samples;
  r.exceed_count = static_cast<int>(std::count_if(q.begin(), q.end(),
                                                  [&](double v) { return v > tau; }));
  r.exceedance = static_cast<double>(r.exceed_count) / samples;
  const double half = 2.0 * std::sqrt(std::max(r.exceedance * (1.0 - r.exceedance), 0.0) /
                                      samples);
  r.ci_low = std::max(0.0, r.exceedance - half);
  r.ci_high = std::min(1.0, r.exceedance + half);
  r.truncation_mass = dist.truncation_mass;
  return r;
}

CalibrationReport calibrate_filter(const LinearGmModel& model_true,
                                   const LinearGmModel& model_filter, int runs, int steps,
                                   double alpha, double threshold, int max_m,
                                   std::optional<int> top_g, std::uint64_t seed,
                                   ConsistencyMode mode, int threads) {
  if (runs < 1) throw ArgumentError("calibrate_filter: runs must be >= 1");
  if (threads < 0) throw ArgumentError("calibrate_filter: threads must be >= 0");
  if (threads == 0) {
    threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
  }
  threads = std::min(threads, runs);

  std::vector<NdsTestResult> results(static_cast<std::size_t>(runs));
  auto worker_body = [&](int run) {
    results[static_cast<std::size_t>(run)] =
        consistency_run(model_true, model_filter, steps, alpha, threshold, max_m, top_g,
                        substream_seed(seed, static_cast<std::uint64_t>(run)), mode);
  };

  if (threads == 1) {
    for (int run = 0; run < runs; ++run) worker_body(run);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          const int run = next.fetch_add(1);
          if (run >= runs) return;
          try {
            worker_body(run);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  CalibrationReport report;
  report.runs = runs;
  report.alpha = alpha;
  double p_sum = 0.0;
  for (const auto& r : results) {
    if (r.reject) ++report.rejections;
    p_sum += r.p_value;
  }
  report.rejection_rate = static_cast<double>(report.rejections) / runs;
  report.mean_p_value = p_sum / runs;
  const double half =
      2.0 * std::sqrt(std::max(report.rejection_rate * (1.0 - report.rejection_rate), 0.0) / runs);
  report.ci_low = std::max(0.0, report.rejection_rate - half);
  report.ci_high = std::min(1.0, report.rejection_rate + half);
  report.results = std::move(results);
  return report;
}

}  // namespace gmnds
