#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gmnds/gaussian_mixture.hpp"
#include "gmnds/hypothesis_test.hpp"

namespace gmnds {

/// Linear dynamics/measurement model with Gaussian-mixture prior, process
/// noise and measurement noise:
///   x_{k+1} = F x_k + B u_k + w_k,   y_{k+1} = H x_{k+1} + v_{k+1}.
/// B may have zero columns (no control input). g_max caps the posterior
/// component count through condensation.
struct LinearGmModel {
  Eigen::MatrixXd F;
  Eigen::MatrixXd B;
  Eigen::MatrixXd H;
  GaussianMixture prior;
  GaussianMixture process_noise;
  GaussianMixture meas_noise;
  int g_max = 1;

  LinearGmModel(Eigen::MatrixXd f, Eigen::MatrixXd b, Eigen::MatrixXd h,
                GaussianMixture prior_in, GaussianMixture process_in,
                GaussianMixture meas_in, int g_max_in);

  Eigen::Index state_dim() const { return F.rows(); }
  Eigen::Index input_dim() const { return B.cols(); }
  Eigen::Index meas_dim() const { return H.rows(); }
};

/// Per-step filter output.
struct FilterStep {
  GaussianMixture posterior;       ///< after condensation to g_max
  Eigen::VectorXd mmse_mean;       ///< posterior mixture mean
  Eigen::MatrixXd mmse_cov;        ///< posterior mixture covariance
  GaussianMixture predicted_meas;  ///< p(y_k | Y_{k-1})
};

/// Accumulated filter history, plus ground truth when simulated.
struct FilterTrace {
  std::vector<FilterStep> steps;
  std::vector<Eigen::VectorXd> truth;         ///< x_0 .. x_N (when simulated)
  std::vector<Eigen::VectorXd> measurements;  ///< y_1 .. y_N

  bool has_truth() const { return !truth.empty(); }
};

/// One component per (posterior d, process i): weight w_d b_i, mean
/// F mu_d + B u + q_i, covariance F S_d F^T + Q_i.
GaussianMixture time_update(const GaussianMixture& post, const LinearGmModel& model,
                            const Eigen::VectorXd& u);

struct MeasurementUpdate {
  GaussianMixture posterior;
  GaussianMixture predicted_meas;
};

/// One component per (prior l, noise j) with a Kalman update against
/// innovation covariance H S H^T + R_j; Joseph-form covariance; weights
/// proportional to w_l g_j N(y; H mu_l + r_j, S_lj), normalized in log space.
/// Components whose normalized weights underflow to zero are dropped.
MeasurementUpdate measurement_update(const GaussianMixture& prior, const LinearGmModel& model,
                                     const Eigen::VectorXd& y);

/// Stateful filter runner: time update, measurement update, condensation to
/// g_max, appending to the trace. The posterior is a value threaded through
/// the steps.
class GmFilter {
 public:
  explicit GmFilter(LinearGmModel model);

  /// Advances one step with measurement y and optional control u.
  void step(const Eigen::VectorXd& y, const Eigen::VectorXd& u = Eigen::VectorXd());

  const GaussianMixture& posterior() const { return posterior_; }
  const FilterTrace& trace() const { return trace_; }
  FilterTrace& trace() { return trace_; }

 private:
  LinearGmModel model_;
  GaussianMixture posterior_;
  FilterTrace trace_;
};

struct Simulation {
  std::vector<Eigen::VectorXd> states;        ///< x_0 .. x_N
  std::vector<Eigen::VectorXd> measurements;  ///< y_1 .. y_N
};

/// Samples a ground-truth trajectory and measurements from the model.
Simulation simulate_truth(const LinearGmModel& model, int steps, std::uint64_t seed);

/// Runs the filter over a recorded measurement sequence.
FilterTrace run_filter(const LinearGmModel& model,
                       std::span<const Eigen::VectorXd> measurements);

struct ErrorSeries {
  std::vector<Eigen::VectorXd> errors;     ///< x_k^true - mmse_mean_k
  std::vector<Eigen::VectorXd> two_sigma;  ///< 2 sqrt(diag(mmse_cov_k))
};

/// MMSE estimation errors and 2-sigma bounds; requires simulated truth.
ErrorSeries error_series(const FilterTrace& trace);

/// Biased sample autocorrelation normalized by lag 0; rho[0] == 1.
/// Throws on constant series (zero variance).
std::vector<double> autocorrelation(std::span<const double> series, int max_lag);

/// Smallest spacing dk such that every error coordinate has |rho(d)| below
/// threshold for all d >= dk (up to the scan window), then step indices
/// dk, 2 dk, ... capped by `count` and the trace length. 1-based indices
/// into trace.steps (step 1 is the first measurement update).
std::vector<int> select_test_steps(const FilterTrace& trace, double threshold, int count);

enum class ConsistencyMode {
  kState,        ///< test posterior pdfs against simulated true states
  kMeasurement,  ///< test predicted-measurement pdfs against recorded data
};

/// End-to-end consistency experiment: simulate with model_true, filter with
/// model_filter, pick weakly correlated steps, build the exact reference
/// mixture for the summed NDS statistic (optionally truncated to top_g
/// components), and test the observed statistic at level alpha.
NdsTestResult consistency_run(const LinearGmModel& model_true, const LinearGmModel& model_filter,
                              int steps, double alpha, double threshold, int max_m,
                              std::optional<int> top_g, std::uint64_t seed,
                              ConsistencyMode mode = ConsistencyMode::kState);

}  // namespace gmnds
