#include "gmnds/filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>

#include "gmnds/linalg.hpp"
#include "gmnds/nds.hpp"
#include "gmnds/rng.hpp"

namespace gmnds {

namespace {

Eigen::VectorXd resolve_input(const LinearGmModel& model, const Eigen::VectorXd& u) {
  if (u.size() == model.input_dim()) return u;
  if (u.size() == 0) return Eigen::VectorXd::Zero(model.input_dim());
  throw ArgumentError("control input length does not match model input dimension");
}

// Incremental per-component sampler with cached Cholesky factors.
class GmSampler {
 public:
  explicit GmSampler(const GaussianMixture& gm) : gm_(gm) {
    double acc = 0.0;
    for (const auto& c : gm.components()) {
      acc += c.weight;
      cumulative_.push_back(acc);
      factors_.push_back(safe_llt(c.cov).matrixL());
    }
    cumulative_.back() = 1.0;
  }

  Eigen::VectorXd draw(Rng& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double u = unif(rng);
    const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), u);
    const auto g = static_cast<std::size_t>(std::distance(cumulative_.begin(), it));
    Eigen::VectorXd z(gm_.dim());
    for (Eigen::Index d = 0; d < z.size(); ++d) z[d] = normal(rng);
    return gm_.components()[g].mean + factors_[g] * z;
  }

 private:
  const GaussianMixture& gm_;
  std::vector<double> cumulative_;
  std::vector<Eigen::MatrixXd> factors_;
};

}  // namespace

LinearGmModel::LinearGmModel(Eigen::MatrixXd f, Eigen::MatrixXd b, Eigen::MatrixXd h,
                             GaussianMixture prior_in, GaussianMixture process_in,
                             GaussianMixture meas_in, int g_max_in)
    : F(std::move(f)),
      B(std::move(b)),
      H(std::move(h)),
      prior(std::move(prior_in)),
      process_noise(std::move(process_in)),
      meas_noise(std::move(meas_in)),
      g_max(g_max_in) {
  const Eigen::Index n = F.rows();
  if (F.cols() != n || n < 1) throw ArgumentError("model: F must be square and nonempty");
  if (B.size() == 0) B = Eigen::MatrixXd::Zero(n, 0);
  if (B.rows() != n) throw ArgumentError("model: B row count must match the state dimension");
  if (H.cols() != n || H.rows() < 1) throw ArgumentError("model: H must be p x n with p >= 1");
  if (prior.dim() != n) throw ArgumentError("model: prior dimension must match F");
  if (process_noise.dim() != n) {
    throw ArgumentError("model: process noise dimension must match the state dimension");
  }
  if (meas_noise.dim() != H.rows()) {
    throw ArgumentError("model: measurement noise dimension must match H");
  }
  if (g_max < 1) throw ArgumentError("model: g_max must be >= 1");
}

GaussianMixture time_update(const GaussianMixture& post, const LinearGmModel& model,
                            const Eigen::VectorXd& u) {
  if (post.dim() != model.state_dim()) {
    throw ArgumentError("time_update: posterior dimension does not match model");
  }
  const Eigen::VectorXd input = resolve_input(model, u);
  const Eigen::VectorXd shift = model.B * input;

  std::vector<GaussianComponent> out;
  out.reserve(static_cast<std::size_t>(post.size() * model.process_noise.size()));
  for (const auto& d : post.components()) {
    const Eigen::VectorXd mean_d = model.F * d.mean + shift;
    const Eigen::MatrixXd cov_d = model.F * d.cov * model.F.transpose();
    for (const auto& w : model.process_noise.components()) {
      out.push_back(GaussianComponent{d.weight * w.weight, mean_d + w.mean,
                                      symmetrize(cov_d + w.cov)});
    }
  }
  return GaussianMixture(std::move(out));
}

MeasurementUpdate measurement_update(const GaussianMixture& prior, const LinearGmModel& model,
                                     const Eigen::VectorXd& y) {
  if (y.size() != model.meas_dim()) {
    throw ArgumentError("measurement_update: measurement length does not match model");
  }
  const Eigen::Index n = model.state_dim();
  const Eigen::Index p = model.meas_dim();
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);
  constexpr double kLog2Pi = 1.8378770664093454836;

  struct Candidate {
    double log_weight;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    double pred_weight;
    Eigen::VectorXd pred_mean;
    Eigen::MatrixXd pred_cov;
  };
  std::vector<Candidate> cands;
  cands.reserve(static_cast<std::size_t>(prior.size() * model.meas_noise.size()));

  for (const auto& l : prior.components()) {
    const Eigen::VectorXd hy = model.H * l.mean;
    const Eigen::MatrixXd ph = l.cov * model.H.transpose();
    const Eigen::MatrixXd hph = model.H * ph;
    for (const auto& j : model.meas_noise.components()) {
      Candidate c;
      c.pred_mean = hy + j.mean;
      c.pred_cov = symmetrize(hph + j.cov);
      c.pred_weight = l.weight * j.weight;

      const auto s_llt = safe_llt(c.pred_cov, "innovation covariance");
      const Eigen::VectorXd innov = y - c.pred_mean;
      const Eigen::VectorXd half = s_llt.matrixL().solve(innov);
      const double log_lik = -0.5 * (static_cast<double>(p) * kLog2Pi +
                                     log_det_from_llt(s_llt) + half.squaredNorm());
      c.log_weight = std::log(c.pred_weight) + log_lik;

      const Eigen::MatrixXd gain = s_llt.solve(ph.transpose()).transpose();
      c.mean = l.mean + gain * innov;
      const Eigen::MatrixXd ikh = identity - gain * model.H;
      c.cov = symmetrize(ikh * l.cov * ikh.transpose() +
                         gain * j.cov * gain.transpose());
      cands.push_back(std::move(c));
    }
  }

  double max_log = -std::numeric_limits<double>::infinity();
  for (const auto& c : cands) max_log = std::max(max_log, c.log_weight);
  if (!std::isfinite(max_log)) throw MeasurementInconsistentError(max_log);

  // components whose shifted weights underflow to zero carry no mass; drop
  // them rather than emit invalid zero-weight components
  double norm = 0.0;
  for (const auto& c : cands) norm += std::exp(c.log_weight - max_log);

  std::vector<GaussianComponent> post;
  std::vector<GaussianComponent> pred;
  post.reserve(cands.size());
  pred.reserve(cands.size());
  for (const auto& c : cands) {
    const double w = std::exp(c.log_weight - max_log) / norm;
    if (w > 0.0) post.push_back(GaussianComponent{w, c.mean, c.cov});
    pred.push_back(GaussianComponent{c.pred_weight, c.pred_mean, c.pred_cov});
  }
  return {GaussianMixture(std::move(post)), GaussianMixture(std::move(pred))};
}

GmFilter::GmFilter(LinearGmModel model) : model_(std::move(model)), posterior_(model_.prior) {}

void GmFilter::step(const Eigen::VectorXd& y, const Eigen::VectorXd& u) {
  const GaussianMixture predicted = time_update(posterior_, model_, u);
  MeasurementUpdate mu = measurement_update(predicted, model_, y);
  GaussianMixture condensed = condense(mu.posterior, model_.g_max);
  Moments m = mixture_moments(condensed);
  posterior_ = condensed;
  trace_.measurements.push_back(y);
  trace_.steps.push_back(FilterStep{std::move(condensed), std::move(m.mean), std::move(m.cov),
                                    std::move(mu.predicted_meas)});
}

Simulation simulate_truth(const LinearGmModel& model, int steps, std::uint64_t seed) {
  if (steps < 1) throw ArgumentError("simulate_truth: steps must be >= 1");
  Rng rng = make_rng(seed);
  const GmSampler prior_sampler(model.prior);
  const GmSampler process_sampler(model.process_noise);
  const GmSampler meas_sampler(model.meas_noise);

  Simulation sim;
  sim.states.reserve(static_cast<std::size_t>(steps) + 1);
  sim.measurements.reserve(static_cast<std::size_t>(steps));
  sim.states.push_back(prior_sampler.draw(rng));
  for (int k = 0; k < steps; ++k) {
    const Eigen::VectorXd next = model.F * sim.states.back() + process_sampler.draw(rng);
    sim.states.push_back(next);
    sim.measurements.push_back(model.H * next + meas_sampler.draw(rng));
  }
  return sim;
}

FilterTrace run_filter(const LinearGmModel& model,
                       std::span<const Eigen::VectorXd> measurements) {
  GmFilter filter(model);
  for (const auto& y : measurements) filter.step(y);
  return filter.trace();
}

ErrorSeries error_series(const FilterTrace& trace) {
  if (!trace.has_truth()) {
    throw ArgumentError("error_series: trace has no simulated ground truth");
  }
  if (trace.truth.size() != trace.steps.size() + 1) {
    throw ArgumentError("error_series: truth length does not match step count");
  }
  ErrorSeries out;
  out.errors.reserve(trace.steps.size());
  out.two_sigma.reserve(trace.steps.size());
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    out.errors.push_back(trace.truth[k + 1] - trace.steps[k].mmse_mean);
    out.two_sigma.push_back(2.0 * trace.steps[k].mmse_cov.diagonal().cwiseSqrt());
  }
  return out;
}

std::vector<double> autocorrelation(std::span<const double> series, int max_lag) {
  const auto n = static_cast<int>(series.size());
  if (max_lag < 0) throw ArgumentError("autocorrelation: max_lag must be >= 0");
  if (n <= max_lag) throw ArgumentError("autocorrelation: series length must exceed max_lag");
  double mean_acc = 0.0;
  for (double v : series) mean_acc += v;
  const double mu = mean_acc / n;
  double denom = 0.0;
  for (double v : series) denom += (v - mu) * (v - mu);
  if (denom <= 0.0) {
    throw ArgumentError("autocorrelation: undefined for a constant series");
  }
  std::vector<double> rho(static_cast<std::size_t>(max_lag) + 1);
  for (int lag = 0; lag <= max_lag; ++lag) {
    double acc = 0.0;
    for (int i = 0; i + lag < n; ++i) {
      acc += (series[static_cast<std::size_t>(i)] - mu) *
             (series[static_cast<std::size_t>(i + lag)] - mu);
    }
    rho[static_cast<std::size_t>(lag)] = acc / denom;
  }
  return rho;
}

namespace {

// Shared step-selection rule for any per-step vector series.
std::vector<int> select_from_series(const std::vector<Eigen::VectorXd>& series, double threshold,
                                    int count) {
  const auto length = static_cast<int>(series.size());
  if (count < 1) throw ArgumentError("select_test_steps: count must be >= 1");
  if (length < 3) throw ArgumentError("select_test_steps: trace is too short");
  const int window = std::min(length - 2, 50);
  const auto dims = series.front().size();

  // max over coordinates of |rho(lag)|
  std::vector<double> rho_max(static_cast<std::size_t>(window) + 1, 0.0);
  std::vector<double> coord(static_cast<std::size_t>(length));
  for (Eigen::Index d = 0; d < dims; ++d) {
    for (int i = 0; i < length; ++i) coord[static_cast<std::size_t>(i)] = series[static_cast<std::size_t>(i)][d];
    const auto rho = autocorrelation(coord, window);
    for (int lag = 0; lag <= window; ++lag) {
      rho_max[static_cast<std::size_t>(lag)] =
          std::max(rho_max[static_cast<std::size_t>(lag)], std::abs(rho[static_cast<std::size_t>(lag)]));
    }
  }

  int spacing = -1;
  double best_tail = std::numeric_limits<double>::infinity();
  for (int dk = 1; dk <= window; ++dk) {
    double tail = 0.0;
    for (int lag = dk; lag <= window; ++lag) {
      tail = std::max(tail, rho_max[static_cast<std::size_t>(lag)]);
    }
    best_tail = std::min(best_tail, tail);
    if (tail < threshold) {
      spacing = dk;
      break;
    }
  }
  if (spacing < 0) {
    throw NumericalError("select_test_steps: no spacing achieves the autocorrelation threshold",
                         best_tail);
  }

  std::vector<int> steps;
  for (int idx = spacing; idx <= length && static_cast<int>(steps.size()) < count; idx += spacing) {
    steps.push_back(idx);
  }
  return steps;
}

}  // namespace

std::vector<int> select_test_steps(const FilterTrace& trace, double threshold, int count) {
  const ErrorSeries err = error_series(trace);
  return select_from_series(err.errors, threshold, count);
}

NdsTestResult consistency_run(const LinearGmModel& model_true, const LinearGmModel& model_filter,
                              int steps, double alpha, double threshold, int max_m,
                              std::optional<int> top_g, std::uint64_t seed,
                              ConsistencyMode mode) {
  if (steps < 3) throw ArgumentError("consistency_run: steps must be >= 3");
  if (max_m < 1) throw ArgumentError("consistency_run: max_m must be >= 1");

  Simulation sim = simulate_truth(model_true, steps, seed);
  FilterTrace trace = run_filter(model_filter, sim.measurements);
  trace.truth = sim.states;

  std::vector<int> picked;
  std::vector<GaussianMixture> references;
  double q_obs = 0.0;

  if (mode == ConsistencyMode::kState) {
    picked = select_test_steps(trace, threshold, max_m);
    for (int idx : picked) {
      const FilterStep& s = trace.steps[static_cast<std::size_t>(idx - 1)];
      references.push_back(s.posterior);
      q_obs += nds_statistic(trace.truth[static_cast<std::size_t>(idx)], s.mmse_mean, s.mmse_cov);
    }
  } else {
    std::vector<Eigen::VectorXd> innovations;
    innovations.reserve(trace.steps.size());
    std::vector<Moments> pred_moments;
    pred_moments.reserve(trace.steps.size());
    for (std::size_t k = 0; k < trace.steps.size(); ++k) {
      Moments m = mixture_moments(trace.steps[k].predicted_meas);
      innovations.push_back(trace.measurements[k] - m.mean);
      pred_moments.push_back(std::move(m));
    }
    picked = select_from_series(innovations, threshold, max_m);
    for (int idx : picked) {
      const auto k = static_cast<std::size_t>(idx - 1);
      references.push_back(trace.steps[k].predicted_meas);
      q_obs += nds_statistic(trace.measurements[k], pred_moments[k].mean, pred_moments[k].cov);
    }
  }

  const GenChi2Mixture reference = sum_nds_dist(references, top_g);
  return nds_test(q_obs, reference, alpha);
}

}  // namespace gmnds
