#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "gmnds/errors.hpp"

namespace gmnds {

/// Generalized chi-square law: the distribution of
///   Q = sum_j w_j * ncx2(k_j, lambda_j) + t
/// with distinct nonzero coefficients w_j, positive integer degrees of
/// freedom k_j and noncentralities lambda_j >= 0.
struct GenChi2 {
  Eigen::VectorXd w;
  Eigen::VectorXi k;
  Eigen::VectorXd lambda;
  double t = 0.0;

  GenChi2(Eigen::VectorXd w_in, Eigen::VectorXi k_in, Eigen::VectorXd lambda_in, double t_in);

  Eigen::Index terms() const { return w.size(); }
  int dof_total() const { return k.sum(); }
  bool all_positive() const { return (w.array() > 0.0).all(); }
};

/// Convex mixture of GenChi2 laws. `truncation_mass` records super-index
/// weight discarded by top-G* retention upstream (0 when the mixture is
/// exact); weights are renormalized to sum to 1.
struct GenChi2Mixture {
  Eigen::VectorXd weights;
  std::vector<GenChi2> components;
  double truncation_mass = 0.0;

  GenChi2Mixture(Eigen::VectorXd weights_in, std::vector<GenChi2> components_in,
                 double truncation_mass_in = 0.0);

  int size() const { return static_cast<int>(components.size()); }
};

/// A CDF value together with an absolute error bound for it.
struct CdfEstimate {
  double value = 0.0;
  double error_bound = 0.0;
};

/// E[Q] = sum_j w_j (k_j + lambda_j) + t
double mean(const GenChi2& g);

/// Var[Q] = 2 sum_j w_j^2 (k_j + 2 lambda_j)
double variance(const GenChi2& g);

double mixture_mean(const GenChi2Mixture& m);
double mixture_variance(const GenChi2Mixture& m);

/// Central chi-square CDF (regularized lower incomplete gamma).
double chi_square_cdf(double dof, double x);

/// P(Q <= x) by numerical inversion of the characteristic function
/// (Imhof 1961). Valid for any sign pattern of w. Absolute error <= tol;
/// requires tol in (0, 1e-3]. Throws NumericalError if the quadrature
/// cannot reach tol within its budget.
CdfEstimate cdf_imhof(const GenChi2& g, double x, double tol = 1e-9);

/// P(Q <= x) by Ruben's series of central chi-square CDFs. Requires every
/// w_j > 0 (throws MethodInapplicableError otherwise) and terms >= 50.
/// error_bound is a rigorous truncation bound for the series.
CdfEstimate cdf_ruben(const GenChi2& g, double x, int terms = 200);

/// Reusable CDF evaluator for a mixture. Builds per-component series
/// coefficients once (Ruben where applicable, inversion fallback) and is
/// immutable afterwards, so concurrent evaluation is safe. Each component
/// is evaluated to absolute tolerance `tol`, hence so is the mixture.
class MixtureCdf {
 public:
  explicit MixtureCdf(const GenChi2Mixture& m, double tol = 1e-9);
  MixtureCdf(MixtureCdf&&) noexcept;
  ~MixtureCdf();

  double operator()(double x) const;
  double tol() const;

 private:
  struct Impl;
  std::unique_ptr<const Impl> impl_;
};

/// sum_g eta_g P(Q_g <= x), each component evaluated at tolerance tol
/// (Ruben where its coefficients are all positive, otherwise inversion).
double mixture_cdf(const GenChi2Mixture& m, double x, double tol = 1e-9);

/// Smallest x with |P(Q <= x) - p| <= tol, by bracket expansion from
/// [min_g t_g, mean + 10 sqrt(variance)] and bisection/secant refinement.
double quantile(const GenChi2Mixture& m, double p, double tol = 1e-6);

/// Constructive sampling: pick a component by weight, then draw each
/// noncentral chi-square as a sum of squared shifted normals. Deterministic
/// given the seed.
std::vector<double> sample_mixture(const GenChi2Mixture& m, int count, std::uint64_t seed);

}  // namespace gmnds
