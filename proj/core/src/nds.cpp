#include "gmnds/nds.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <vector>

#include <Eigen/Eigenvalues>

#include "gmnds/linalg.hpp"

namespace gmnds {

namespace {

constexpr double kEigGroupTol = 1e-8;  // relative eigenvalue grouping tolerance

struct EigenGroup {
  double w;
  int k;
  double lambda;
};

// Groups ascending eigenvalues by transitive chaining at relative tolerance,
// aggregating b_i^2 over each group into the noncentrality.
std::vector<EigenGroup> group_eigenvalues(const Eigen::VectorXd& d, const Eigen::VectorXd& b) {
  std::vector<EigenGroup> groups;
  Eigen::Index i = 0;
  const Eigen::Index n = d.size();
  while (i < n) {
    Eigen::Index j = i + 1;
    while (j < n &&
           d[j] - d[j - 1] <= kEigGroupTol * std::max(std::abs(d[j]), std::abs(d[j - 1]))) {
      ++j;
    }
    double w = 0.0;
    double b2 = 0.0;
    for (Eigen::Index r = i; r < j; ++r) {
      w += d[r];
      b2 += b[r] * b[r];
    }
    w /= static_cast<double>(j - i);
    groups.push_back({w, static_cast<int>(j - i), b2 / (4.0 * w * w)});
    i = j;
  }
  return groups;
}

GenChi2 groups_to_gen_chi2(const std::vector<EigenGroup>& groups, double t) {
  const auto m = static_cast<Eigen::Index>(groups.size());
  Eigen::VectorXd w(m);
  Eigen::VectorXi k(m);
  Eigen::VectorXd lambda(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    w[j] = groups[static_cast<std::size_t>(j)].w;
    k[j] = groups[static_cast<std::size_t>(j)].k;
    lambda[j] = groups[static_cast<std::size_t>(j)].lambda;
  }
  return GenChi2(std::move(w), std::move(k), std::move(lambda), t);
}

// Re-canonicalizes a concatenated parameter list: sort by coefficient and
// merge near-equal coefficients (k summed, lambda summed, coefficient
// k-weighted).
std::vector<EigenGroup> merge_groups(std::vector<EigenGroup> groups) {
  std::sort(groups.begin(), groups.end(),
            [](const EigenGroup& a, const EigenGroup& b) { return a.w < b.w; });
  std::vector<EigenGroup> merged;
  for (const auto& g : groups) {
    if (!merged.empty()) {
      auto& last = merged.back();
      if (g.w - last.w <= kEigGroupTol * std::max(std::abs(g.w), std::abs(last.w))) {
        const double total_k = last.k + g.k;
        last.w = (last.w * last.k + g.w * g.k) / total_k;
        last.k += g.k;
        last.lambda += g.lambda;
        continue;
      }
    }
    merged.push_back(g);
  }
  return merged;
}

}  // namespace

QuadFormCoeffs quad_form_coeffs(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw ArgumentError("quad_form_coeffs: covariance shape does not match mean");
  }
  if (!is_symmetric(cov)) {
    throw ArgumentError("quad_form_coeffs: covariance is not symmetric");
  }
  const auto llt = safe_llt(cov, "reference covariance");
  QuadFormCoeffs out;
  out.A = symmetrize(llt.solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols())));
  out.q1 = -2.0 * out.A * mean;
  out.q0 = mean.dot(out.A * mean);
  return out;
}

double nds_statistic(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                     const Eigen::MatrixXd& cov) {
  if (x.size() != mean.size()) {
    throw ArgumentError("nds_statistic: point dimension does not match mean");
  }
  const auto llt = safe_llt(cov, "reference covariance");
  const Eigen::VectorXd half = llt.matrixL().solve(x - mean);
  return half.squaredNorm();
}

GenChi2 gaussian_nds_dist(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                          const Eigen::VectorXd& ref_mean, const Eigen::MatrixXd& ref_cov) {
  const Eigen::Index n = mean.size();
  if (ref_mean.size() != n || cov.rows() != n || ref_cov.rows() != n) {
    throw ArgumentError("gaussian_nds_dist: dimension mismatch");
  }

  const auto ref_llt = safe_llt(ref_cov, "reference covariance");
  const Eigen::MatrixXd a =
      symmetrize(ref_llt.solve(Eigen::MatrixXd::Identity(n, n)));

  const Eigen::MatrixXd s = safe_llt(cov, "component covariance").matrixL();
  const Eigen::MatrixXd a_tilde = symmetrize(s.transpose() * a * s);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a_tilde);
  if (eig.info() != Eigen::Success) {
    throw DegenerateCovarianceError("gaussian_nds_dist: eigen-decomposition failed");
  }
  const Eigen::VectorXd d = eig.eigenvalues();  // ascending
  if (d.minCoeff() <= 0.0) {
    throw DegenerateCovarianceError("gaussian_nds_dist: transformed form not positive definite");
  }

  const Eigen::VectorXd diff = mean - ref_mean;
  const Eigen::VectorXd b =
      2.0 * eig.eigenvectors().transpose() * (s.transpose() * (a * diff));

  const double q_mu = diff.dot(a * diff);
  auto groups = group_eigenvalues(d, b);
  double wl = 0.0;
  for (const auto& g : groups) wl += g.w * g.lambda;
  return groups_to_gen_chi2(groups, q_mu - wl);
}

GenChi2Mixture gm_nds_dist(const GaussianMixture& gm) {
  const Moments m = mixture_moments(gm);
  Eigen::VectorXd weights(gm.size());
  std::vector<GenChi2> comps;
  comps.reserve(static_cast<std::size_t>(gm.size()));
  for (int g = 0; g < gm.size(); ++g) {
    const auto& c = gm.component(g);
    weights[g] = c.weight;
    comps.push_back(gaussian_nds_dist(c.mean, c.cov, m.mean, m.cov));
  }
  return GenChi2Mixture(std::move(weights), std::move(comps));
}

namespace {

struct PerMixture {
  std::vector<double> weights;  // original component order
  std::vector<GenChi2> comps;
  std::vector<int> by_weight;   // indices sorted by descending weight
};

struct TupleCandidate {
  double weight;
  std::vector<int> idx;
};

struct TupleCandidateLess {
  bool operator()(const TupleCandidate& a, const TupleCandidate& b) const {
    if (a.weight != b.weight) return a.weight < b.weight;
    return a.idx > b.idx;  // prefer lexicographically smaller on ties
  }
};

GenChi2 concatenate_components(const std::vector<PerMixture>& per, const std::vector<int>& idx) {
  std::vector<EigenGroup> groups;
  double t = 0.0;
  for (std::size_t c = 0; c < per.size(); ++c) {
    const GenChi2& g = per[c].comps[static_cast<std::size_t>(idx[c])];
    t += g.t;
    for (Eigen::Index j = 0; j < g.w.size(); ++j) {
      groups.push_back({g.w[j], g.k[j], g.lambda[j]});
    }
  }
  return groups_to_gen_chi2(merge_groups(std::move(groups)), t);
}

}  // namespace

GenChi2Mixture sum_nds_dist(std::span<const GaussianMixture> gms, std::optional<int> top_g) {
  if (gms.empty()) throw ArgumentError("sum_nds_dist: need at least one mixture");
  if (top_g && *top_g < 1) throw ArgumentError("sum_nds_dist: top_g must be >= 1");

  const std::size_t m_count = gms.size();
  std::vector<PerMixture> per(m_count);
  double product = 1.0;
  for (std::size_t c = 0; c < m_count; ++c) {
    GenChi2Mixture comp_dist = gm_nds_dist(gms[c]);
    PerMixture& p = per[c];
    for (int i = 0; i < comp_dist.size(); ++i) {
      p.weights.push_back(comp_dist.weights[i]);
      p.comps.push_back(std::move(comp_dist.components[static_cast<std::size_t>(i)]));
      p.by_weight.push_back(i);
    }
    std::stable_sort(p.by_weight.begin(), p.by_weight.end(),
                     [&](int a, int b) { return p.weights[static_cast<std::size_t>(a)] >
                                                p.weights[static_cast<std::size_t>(b)]; });
    product *= static_cast<double>(comp_dist.size());
  }

  const bool truncate = top_g && product > static_cast<double>(*top_g);
  if (!truncate && product > 1e7) {
    throw ArgumentError("sum_nds_dist: super-index count exceeds 10^7; pass top_g");
  }

  std::vector<TupleCandidate> selected;
  if (!truncate) {
    // full enumeration in canonical lexicographic order
    const auto total = static_cast<std::size_t>(product);
    selected.reserve(total);
    std::vector<int> idx(m_count, 0);
    for (;;) {
      double w = 1.0;
      for (std::size_t c = 0; c < m_count; ++c) {
        w *= per[c].weights[static_cast<std::size_t>(idx[c])];
      }
      selected.push_back({w, idx});
      std::size_t c = m_count;
      while (c > 0) {
        --c;
        if (++idx[c] < static_cast<int>(per[c].weights.size())) break;
        idx[c] = 0;
        if (c == 0) goto done;
      }
    }
  done:;
  } else {
    // best-first search over the product lattice (in descending-weight index
    // space) for the heaviest tuples
    auto rank_weight = [&](std::size_t c, int rank) {
      return per[c].weights[static_cast<std::size_t>(per[c].by_weight[static_cast<std::size_t>(rank)])];
    };
    std::priority_queue<TupleCandidate, std::vector<TupleCandidate>, TupleCandidateLess> heap;
    std::set<std::vector<int>> seen;
    std::vector<int> root(m_count, 0);
    double w0 = 1.0;
    for (std::size_t c = 0; c < m_count; ++c) w0 *= rank_weight(c, 0);
    heap.push({w0, root});
    seen.insert(std::move(root));
    while (!heap.empty() && selected.size() < static_cast<std::size_t>(*top_g)) {
      TupleCandidate best = heap.top();
      heap.pop();
      selected.push_back(best);
      for (std::size_t c = 0; c < m_count; ++c) {
        const int next = best.idx[c] + 1;
        if (next >= static_cast<int>(per[c].weights.size())) continue;
        std::vector<int> child = best.idx;
        child[c] = next;
        if (!seen.insert(child).second) continue;
        const double w = best.weight / rank_weight(c, best.idx[c]) * rank_weight(c, next);
        heap.push({w, std::move(child)});
      }
    }
    // map ranks back to original component indices and emit canonically
    for (auto& s : selected) {
      for (std::size_t c = 0; c < m_count; ++c) {
        s.idx[c] = per[c].by_weight[static_cast<std::size_t>(s.idx[c])];
      }
    }
    std::sort(selected.begin(), selected.end(),
              [](const TupleCandidate& a, const TupleCandidate& b) { return a.idx < b.idx; });
  }

  double kept = 0.0;
  for (const auto& s : selected) kept += s.weight;
  Eigen::VectorXd weights(static_cast<Eigen::Index>(selected.size()));
  std::vector<GenChi2> comps;
  comps.reserve(selected.size());
  for (std::size_t i = 0; i < selected.size(); ++i) {
    weights[static_cast<Eigen::Index>(i)] = selected[i].weight / kept;
    comps.push_back(concatenate_components(per, selected[i].idx));
  }
  const double discarded = truncate ? std::max(0.0, 1.0 - kept) : 0.0;
  return GenChi2Mixture(std::move(weights), std::move(comps), discarded);
}

}  // namespace gmnds
