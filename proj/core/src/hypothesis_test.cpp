#include "gmnds/hypothesis_test.hpp"

#include <algorithm>

namespace gmnds {

namespace {
constexpr double kQuantileTol = 1e-6;
}

double critical_threshold(const GenChi2Mixture& m, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ArgumentError("critical_threshold: alpha must lie in (0, 1)");
  }
  return quantile(m, 1.0 - alpha, kQuantileTol);
}

NdsTestResult nds_test(double q_obs, const GenChi2Mixture& m, double alpha) {
  NdsTestResult r;
  r.statistic = q_obs;
  r.alpha = alpha;
  r.tau = critical_threshold(m, alpha);
  r.p_value = std::clamp(1.0 - mixture_cdf(m, q_obs), 0.0, 1.0);
  r.reject = q_obs >= r.tau;
  r.truncation_mass = m.truncation_mass;
  return r;
}

}  // namespace gmnds
