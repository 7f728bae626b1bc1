#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "gmnds/errors.hpp"

namespace gmnds {

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

inline bool is_symmetric(const Eigen::MatrixXd& m, double rel_tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  const double scale = m.cwiseAbs().maxCoeff();
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * std::max(1.0, scale);
}

/// Cholesky factorization that defines "positive definite" for the whole
/// library: success means PD, failure throws DegenerateCovarianceError.
inline Eigen::LLT<Eigen::MatrixXd> safe_llt(const Eigen::MatrixXd& m,
                                            const char* context = "covariance") {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw DegenerateCovarianceError(std::string(context) +
                                    ": matrix is not positive definite");
  }
  return llt;
}

/// log det of a PD matrix from its Cholesky factor.
inline double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace gmnds
