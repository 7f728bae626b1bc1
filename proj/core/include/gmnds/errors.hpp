#pragma once

#include <stdexcept>
#include <string>

namespace gmnds {

/// Base class of every error thrown by this library.
class Error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input: bad dimensions, invalid weights,
/// unparseable JSON, out-of-range parameters.
class ArgumentError : public Error {
  using Error::Error;
};

/// A covariance matrix (or a derived mixture covariance) is not symmetric
/// positive definite, detected by a failed triangular factorization.
class DegenerateCovarianceError : public ArgumentError {
  using ArgumentError::ArgumentError;
};

/// A numerical routine could not reach its accuracy target within its
/// iteration budget. Carries the error estimate that was achieved.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double achieved_error)
      : Error(what), achieved_error_(achieved_error) {}

  double achieved_error() const noexcept { return achieved_error_; }

 private:
  double achieved_error_;
};

/// A series method was asked to handle parameters outside its domain
/// (e.g. mixed-sign coefficients). Callers typically fall back to the
/// inversion-integral route.
class MethodInapplicableError : public Error {
  using Error::Error;
};

/// Every component likelihood underflowed to zero in a measurement update.
/// Carries the largest component log-likelihood seen.
class MeasurementInconsistentError : public NumericalError {
 public:
  explicit MeasurementInconsistentError(double max_log_likelihood)
      : NumericalError("measurement update: all component likelihoods underflow to zero",
                       max_log_likelihood),
        max_log_likelihood_(max_log_likelihood) {}

  double max_log_likelihood() const noexcept { return max_log_likelihood_; }

 private:
  double max_log_likelihood_;
};

}  // namespace gmnds
