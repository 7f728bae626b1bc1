#pragma once

#include <optional>
#include <span>

#include <Eigen/Dense>

#include "gmnds/gaussian_mixture.hpp"
#include "gmnds/gen_chi2.hpp"

namespace gmnds {

/// Coefficients of the expanded quadratic form
///   q(x) = x^T A x + q1^T x + q0,  A = cov^{-1}, q1 = -2 A mean, q0 = mean^T A mean,
/// equal to the normalized deviation squared (x - mean)^T cov^{-1} (x - mean).
struct QuadFormCoeffs {
  Eigen::MatrixXd A;
  Eigen::VectorXd q1;
  double q0 = 0.0;
};

QuadFormCoeffs quad_form_coeffs(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);

/// (x - mean)^T cov^{-1} (x - mean) via triangular solve; never forms cov^{-1}.
double nds_statistic(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                     const Eigen::MatrixXd& cov);

/// Exact law of q(x) = (x - ref_mean)^T ref_cov^{-1} (x - ref_mean) for
/// x ~ N(mean, cov): a generalized chi-square whose coefficients are the
/// eigenvalues of S^T ref_cov^{-1} S (cov = S S^T), grouped at relative
/// tolerance 1e-8, with per-group noncentralities aggregated from the
/// rotated linear term.
GenChi2 gaussian_nds_dist(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                          const Eigen::VectorXd& ref_mean, const Eigen::MatrixXd& ref_cov);

/// Exact law of the NDS statistic of a Gaussian mixture against its own
/// mixture moments: one generalized chi-square component per mixture
/// component, carrying the mixture weight.
GenChi2Mixture gm_nds_dist(const GaussianMixture& gm);

/// Exact law of Q = sum_c q_c(x_c) for independent GM-distributed x_c: one
/// component per super-index realization (prod_c G_c in total), built by
/// concatenating per-mixture component parameters. When top_g is set and the
/// product count exceeds it, only the heaviest top_g components are kept and
/// weights are renormalized; the discarded mass is reported in the result's
/// truncation_mass. Without top_g, product counts above 10^7 are refused.
GenChi2Mixture sum_nds_dist(std::span<const GaussianMixture> gms,
                            std::optional<int> top_g = std::nullopt);

}  // namespace gmnds
