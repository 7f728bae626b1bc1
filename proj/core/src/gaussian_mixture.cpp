#include "gmnds/gaussian_mixture.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>

#include "gmnds/linalg.hpp"
#include "gmnds/rng.hpp"

namespace gmnds {

namespace {

constexpr double kWeightSumSlack = 1e-6;

double log_gaussian_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                            const Eigen::LLT<Eigen::MatrixXd>& llt, double log_det) {
  const Eigen::Index n = mean.size();
  const Eigen::VectorXd half = llt.matrixL().solve(x - mean);
  return -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + log_det +
                 half.squaredNorm());
}

}  // namespace

void validate_component(const GaussianComponent& c) {
  if (!(c.weight > 0.0)) {
    throw ArgumentError("Gaussian component weight must be positive");
  }
  if (c.cov.rows() != c.mean.size() || c.cov.cols() != c.mean.size()) {
    throw ArgumentError("Gaussian component covariance shape does not match mean length");
  }
  if (c.mean.size() == 0) {
    throw ArgumentError("Gaussian component dimension must be at least 1");
  }
  if (!is_symmetric(c.cov)) {
    throw ArgumentError("Gaussian component covariance is not symmetric");
  }
  safe_llt(c.cov, "component covariance");
}

GaussianMixture::GaussianMixture(std::vector<GaussianComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) {
    throw ArgumentError("Gaussian mixture needs at least one component");
  }
  dim_ = components_.front().dim();
  double sum = 0.0;
  for (const auto& c : components_) {
    validate_component(c);
    if (c.dim() != dim_) {
      throw ArgumentError("Gaussian mixture components disagree on dimension");
    }
    sum += c.weight;
  }
  if (std::abs(sum - 1.0) > kWeightSumSlack) {
    throw ArgumentError("Gaussian mixture weights sum to " + std::to_string(sum) +
                        ", expected 1 within 1e-6");
  }
  for (auto& c : components_) c.weight /= sum;
}

Moments mixture_moments(const GaussianMixture& gm) {
  const Eigen::Index n = gm.dim();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(n, n);
  for (const auto& c : gm.components()) {
    mean.noalias() += c.weight * c.mean;
    second.noalias() += c.weight * (c.cov + c.mean * c.mean.transpose());
  }
  Eigen::MatrixXd cov = symmetrize(second - mean * mean.transpose());
  safe_llt(cov, "mixture covariance");
  return {std::move(mean), std::move(cov)};
}

Eigen::MatrixXd sample(const GaussianMixture& gm, int count, std::uint64_t seed) {
  if (count < 1) throw ArgumentError("sample count must be >= 1");
  const Eigen::Index n = gm.dim();
  const int g_count = gm.size();

  std::vector<double> cumulative(static_cast<std::size_t>(g_count));
  double acc = 0.0;
  for (int g = 0; g < g_count; ++g) {
    acc += gm.component(g).weight;
    cumulative[static_cast<std::size_t>(g)] = acc;
  }
  cumulative.back() = 1.0;

  std::vector<Eigen::MatrixXd> factors;
  factors.reserve(static_cast<std::size_t>(g_count));
  for (const auto& c : gm.components()) {
    factors.push_back(safe_llt(c.cov).matrixL());
  }

  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::MatrixXd out(n, count);
  Eigen::VectorXd z(n);
  for (int i = 0; i < count; ++i) {
    const double u = unif(rng);
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
    const auto g = static_cast<std::size_t>(std::distance(cumulative.begin(), it));
    for (Eigen::Index d = 0; d < n; ++d) z[d] = normal(rng);
    out.col(i) = gm.components()[g].mean + factors[g] * z;
  }
  return out;
}

double log_density(const GaussianMixture& gm, const Eigen::VectorXd& x) {
  if (x.size() != gm.dim()) {
    throw ArgumentError("log_density: point dimension does not match mixture");
  }
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(gm.size()));
  for (const auto& c : gm.components()) {
    const auto llt = safe_llt(c.cov);
    terms.push_back(std::log(c.weight) +
                    log_gaussian_density(x, c.mean, llt, log_det_from_llt(llt)));
  }
  const double shift = *std::max_element(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - shift);
  return shift + std::log(sum);
}

GaussianComponent moment_matched_gaussian(const GaussianMixture& gm) {
  Moments m = mixture_moments(gm);
  return GaussianComponent{1.0, std::move(m.mean), std::move(m.cov)};
}

namespace {

// Moment-space bookkeeping for condensation. Merging in (weight, weighted
// mean, weighted second moment) space keeps every merge exactly
// moment-preserving.
struct CondenseEntry {
  double weight;
  Eigen::VectorXd wmean;    // weight * mean
  Eigen::MatrixXd wsecond;  // weight * (cov + mean mean^T)
  double log_det;           // logdet of the component covariance
  bool alive;

  Eigen::VectorXd mean() const { return wmean / weight; }
  Eigen::MatrixXd cov() const {
    const Eigen::VectorXd mu = mean();
    return symmetrize(wsecond / weight - mu * mu.transpose());
  }
};

double merged_log_det(const CondenseEntry& a, const CondenseEntry& b) {
  const double w = a.weight + b.weight;
  if (a.wmean.size() == 1) {  // scalar fast path; this loop dominates 1D runs
    const double mu = (a.wmean[0] + b.wmean[0]) / w;
    const double var = (a.wsecond(0, 0) + b.wsecond(0, 0)) / w - mu * mu;
    return var > 0.0 ? std::log(var) : std::numeric_limits<double>::infinity();
  }
  const Eigen::VectorXd mu = (a.wmean + b.wmean) / w;
  const Eigen::MatrixXd cov = symmetrize((a.wsecond + b.wsecond) / w - mu * mu.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    // Round-off can make a nearly singular merge candidate fail; make it
    // maximally unattractive instead of aborting the reduction.
    return std::numeric_limits<double>::infinity();
  }
  return log_det_from_llt(llt);
}

// Runnalls' KL upper bound for replacing {i, j} by their moment-matched merge.
double merge_cost(const CondenseEntry& a, const CondenseEntry& b) {
  const double w = a.weight + b.weight;
  const double ld = merged_log_det(a, b);
  return 0.5 * (w * ld - a.weight * a.log_det - b.weight * b.log_det);
}

}  // namespace

GaussianMixture condense(const GaussianMixture& gm, int target) {
  if (target < 1) throw ArgumentError("condense target must be >= 1");
  if (gm.size() <= target) return gm;

  const int g0 = gm.size();
  const auto n0 = static_cast<std::size_t>(g0);
  std::vector<CondenseEntry> entries;
  entries.reserve(n0);
  for (const auto& c : gm.components()) {
    CondenseEntry e;
    e.weight = c.weight;
    e.wmean = c.weight * c.mean;
    e.wsecond = c.weight * (c.cov + c.mean * c.mean.transpose());
    e.log_det = log_det_from_llt(safe_llt(c.cov));
    e.alive = true;
    entries.push_back(std::move(e));
  }
  const bool scalar = gm.dim() == 1;

  // Pairwise merge costs are cached; stale-partner repair then only rescans
  // the cached row instead of re-evaluating log-determinants.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> cost(n0 * n0, inf);
  auto cost_at = [&](int i, int j) -> double& { return cost[static_cast<std::size_t>(i) * n0 + static_cast<std::size_t>(j)]; };

  // fills cost(i, j) for all alive j != i (both triangles)
  Eigen::ArrayXd batch_var(g0);
  std::vector<int> batch_idx;
  batch_idx.reserve(n0);
  auto fill_row = [&](int i) {
    const CondenseEntry& a = entries[static_cast<std::size_t>(i)];
    if (scalar) {
      // vectorized 1D kernel: one SIMD log pass over the row
      batch_idx.clear();
      for (int j = 0; j < g0; ++j) {
        if (j != i && entries[static_cast<std::size_t>(j)].alive) batch_idx.push_back(j);
      }
      const auto m = static_cast<Eigen::Index>(batch_idx.size());
      Eigen::ArrayXd wsum(m), mu(m), var(m), ld(m), wld(m);
      for (Eigen::Index r = 0; r < m; ++r) {
        const CondenseEntry& b = entries[static_cast<std::size_t>(batch_idx[static_cast<std::size_t>(r)])];
        wsum[r] = a.weight + b.weight;
        mu[r] = (a.wmean[0] + b.wmean[0]) / wsum[r];
        var[r] = (a.wsecond(0, 0) + b.wsecond(0, 0)) / wsum[r] - mu[r] * mu[r];
        wld[r] = b.weight * b.log_det;
      }
      ld = var.max(1e-300).log();
      for (Eigen::Index r = 0; r < m; ++r) {
        const int j = batch_idx[static_cast<std::size_t>(r)];
        const double c = 0.5 * (wsum[r] * ld[r] - a.weight * a.log_det - wld[r]);
        cost_at(i, j) = c;
        cost_at(j, i) = c;
      }
    } else {
      for (int j = 0; j < g0; ++j) {
        if (j == i || !entries[static_cast<std::size_t>(j)].alive) continue;
        const double c = merge_cost(a, entries[static_cast<std::size_t>(j)]);
        cost_at(i, j) = c;
        cost_at(j, i) = c;
      }
    }
  };

  std::vector<double> best_cost(n0, inf);
  std::vector<int> best_partner(n0, -1);
  auto rescan_row = [&](int i) {
    double best = inf;
    int arg = -1;
    const double* row = &cost[static_cast<std::size_t>(i) * n0];
    for (int j = 0; j < g0; ++j) {
      if (!entries[static_cast<std::size_t>(j)].alive || j == i) continue;
      if (row[j] < best) {
        best = row[j];
        arg = j;
      }
    }
    best_cost[static_cast<std::size_t>(i)] = best;
    best_partner[static_cast<std::size_t>(i)] = arg;
  };

  for (int i = 0; i < g0; ++i) fill_row(i);
  for (int i = 0; i < g0; ++i) rescan_row(i);

  int alive = g0;
  while (alive > target) {
    int i = -1;
    double c_min = inf;
    for (int k = 0; k < g0; ++k) {
      if (!entries[static_cast<std::size_t>(k)].alive) continue;
      if (best_cost[static_cast<std::size_t>(k)] < c_min) {
        c_min = best_cost[static_cast<std::size_t>(k)];
        i = k;
      }
    }
    const int j = best_partner[static_cast<std::size_t>(i)];
    const int lo = std::min(i, j), hi = std::max(i, j);

    auto& a = entries[static_cast<std::size_t>(lo)];
    auto& b = entries[static_cast<std::size_t>(hi)];
    a.weight += b.weight;
    a.wmean += b.wmean;
    a.wsecond += b.wsecond;
    if (scalar) {
      const double mu = a.wmean[0] / a.weight;
      const double var = a.wsecond(0, 0) / a.weight - mu * mu;
      if (!(var > 0.0)) throw DegenerateCovarianceError("condense: merged variance not positive");
      a.log_det = std::log(var);
    } else {
      a.log_det = log_det_from_llt(safe_llt(a.cov(), "merged covariance"));
    }
    b.alive = false;
    --alive;
    if (alive == target) break;

    fill_row(lo);
    rescan_row(lo);
    for (int k = 0; k < g0; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      if (!entries[ku].alive || k == lo) continue;
      if (best_partner[ku] == lo || best_partner[ku] == hi) {
        rescan_row(k);  // cached nearest pair went stale
      } else if (cost_at(k, lo) < best_cost[ku]) {
        best_cost[ku] = cost_at(k, lo);
        best_partner[ku] = lo;
      }
    }
  }

  std::vector<GaussianComponent> out;
  out.reserve(static_cast<std::size_t>(alive));
  for (const auto& e : entries) {
    if (!e.alive) continue;
    out.push_back(GaussianComponent{e.weight, e.mean(), e.cov()});
  }
  return GaussianMixture(std::move(out));
}

}  // namespace gmnds
