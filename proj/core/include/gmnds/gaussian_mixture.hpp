#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "gmnds/errors.hpp"

namespace gmnds {

/// One weighted Gaussian component. Treated as an immutable value after
/// construction; validity is enforced when a GaussianMixture is built.
struct GaussianComponent {
  double weight = 1.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  Eigen::Index dim() const { return mean.size(); }
};

/// Throws unless weight > 0, cov is symmetric (relative tolerance 1e-12) and
/// positive definite (a Cholesky factorization succeeds).
void validate_component(const GaussianComponent& c);

/// A finite Gaussian mixture in n dimensions. Weights are renormalized to
/// sum exactly to 1 if they are within 1e-6 of 1; anything further off is
/// rejected as a real bug rather than file round-off.
class GaussianMixture {
 public:
  explicit GaussianMixture(std::vector<GaussianComponent> components);

  Eigen::Index dim() const { return dim_; }
  int size() const { return static_cast<int>(components_.size()); }
  const std::vector<GaussianComponent>& components() const { return components_; }
  const GaussianComponent& component(int g) const { return components_[static_cast<std::size_t>(g)]; }

 private:
  Eigen::Index dim_ = 0;
  std::vector<GaussianComponent> components_;
};

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Mixture mean and covariance by the law of total mean/covariance:
///   mean = sum_g eta_g mu_g
///   cov  = sum_g eta_g (Sigma_g + mu_g mu_g^T) - mean mean^T
/// The returned covariance is symmetrized; a non-PD result throws.
Moments mixture_moments(const GaussianMixture& gm);

/// Draws `count` samples, one column per draw. Component selection by weight,
/// then a draw from the selected Gaussian. Deterministic given the seed.
Eigen::MatrixXd sample(const GaussianMixture& gm, int count, std::uint64_t seed);

/// log of sum_g eta_g N(x; mu_g, Sigma_g), max-shifted for stability.
double log_density(const GaussianMixture& gm, const Eigen::VectorXd& x);

/// Weight-1 Gaussian with the mixture's mean and covariance.
GaussianComponent moment_matched_gaussian(const GaussianMixture& gm);

/// Greedy pairwise condensation to at most `target` components. Each merge
/// replaces a pair with its moment-matched Gaussian; pairs are chosen by the
/// smallest Runnalls KL upper bound
///   B(i,j) = 0.5 [ (wi+wj) logdet(S_ij) - wi logdet(S_i) - wj logdet(S_j) ].
/// Overall mixture mean and covariance are preserved exactly at every merge.
GaussianMixture condense(const GaussianMixture& gm, int target);

}  // namespace gmnds
