#include "gmnds/gen_chi2.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/gamma.hpp>

#include "gmnds/rng.hpp"

namespace gmnds {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kCoeffSeparation = 1e-8;  // relative distinctness of w entries

// ---------------------------------------------------------------------------
// Adaptive Gauss-Kronrod (G7, K15) quadrature
// ---------------------------------------------------------------------------

// QUADPACK dqk15 nodes and weights.
constexpr double kXgk[8] = {
    0.9914553711208126392068547, 0.9491079123427585245261897,
    0.8648644233597690727897128, 0.7415311855993944398638648,
    0.5860872354676911302941448, 0.4058451513773971669066064,
    0.2077849550078984676006894, 0.0};
constexpr double kWgk[8] = {
    0.0229353220105292249637320, 0.0630920926299785532907007,
    0.1047900103222501838398763, 0.1406532597155259187451896,
    0.1690047266392679028265834, 0.1903505780647854099132564,
    0.2044329400752988924141620, 0.2094821410847278280129992};
constexpr double kWg[4] = {
    0.1294849661688696932706114, 0.2797053914892766679014678,
    0.3818300505051189449503698, 0.4179591836734693877551020};

struct PanelResult {
  double value;
  double error;
};

template <typename F>
PanelResult gk15(const F& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double fc = f(c);
  double kron = kWgk[7] * fc;
  double gauss = kWg[3] * fc;
  for (int i = 0; i < 7; ++i) {
    const double x = h * kXgk[i];
    const double fsum = f(c - x) + f(c + x);
    kron += kWgk[i] * fsum;
    if (i % 2 == 1) gauss += kWg[i / 2] * fsum;
  }
  kron *= h;
  gauss *= h;
  return {kron, std::abs(kron - gauss)};
}

/// Adaptive bisection on [a, b] to absolute tolerance. Returns the value and
/// an error estimate; err may exceed tol if the panel budget runs out.
template <typename F>
PanelResult adaptive_gk(const F& f, double a, double b, double abs_tol,
                        int max_panels = 4000) {
  struct Segment {
    double a, b, value, error;
  };
  std::vector<Segment> segs;
  PanelResult first = gk15(f, a, b);
  segs.push_back({a, b, first.value, first.error});
  double total_err = first.error;
  int panels = 1;
  while (total_err > abs_tol && panels < max_panels) {
    // split the worst segment
    std::size_t worst = 0;
    for (std::size_t i = 1; i < segs.size(); ++i) {
      if (segs[i].error > segs[worst].error) worst = i;
    }
    Segment s = segs[worst];
    const double m = 0.5 * (s.a + s.b);
    if (m <= s.a || m >= s.b) break;  // cannot refine further
    PanelResult left = gk15(f, s.a, m);
    PanelResult right = gk15(f, m, s.b);
    total_err += left.error + right.error - s.error;
    segs[worst] = {s.a, m, left.value, left.error};
    segs.push_back({m, s.b, right.value, right.error});
    ++panels;
  }
  double value = 0.0;
  for (const auto& s : segs) value += s.value;
  return {value, total_err};
}

// ---------------------------------------------------------------------------
// Imhof characteristic-function inversion
// ---------------------------------------------------------------------------

// Integrand state for P(Q <= x), Q = sum_j w_j ncx2(k_j, lambda_j), shifted
// so that the offset t is already absorbed into y = x - t:
//   P(Q > y) = 1/2 + (1/pi) Int_0^inf sin(theta(u)) / (u rho(u)) du
struct ImhofIntegrand {
  const Eigen::VectorXd& w;
  const Eigen::VectorXi& k;
  const Eigen::VectorXd& lambda;
  double y;

  double theta(double u) const {
    double s = 0.0;
    for (Eigen::Index j = 0; j < w.size(); ++j) {
      const double wu = w[j] * u;
      s += k[j] * std::atan(wu) + lambda[j] * wu / (1.0 + wu * wu);
    }
    return 0.5 * s - 0.5 * y * u;
  }

  double theta_prime(double u) const {
    double s = 0.0;
    for (Eigen::Index j = 0; j < w.size(); ++j) {
      const double a = w[j] * u * w[j] * u;
      s += k[j] * w[j] / (1.0 + a) + lambda[j] * w[j] * (1.0 - a) / ((1.0 + a) * (1.0 + a));
    }
    return 0.5 * s - 0.5 * y;
  }

  double log_rho(double u) const {
    double s = 0.0;
    for (Eigen::Index j = 0; j < w.size(); ++j) {
      const double a = w[j] * u * w[j] * u;
      s += 0.25 * k[j] * std::log1p(a) + 0.5 * lambda[j] * a / (1.0 + a);
    }
    return s;
  }

  double operator()(double u) const {
    return std::sin(theta(u)) * std::exp(-log_rho(u)) / u;
  }

  // |theta'(u) + y/2| <= envelope(u); decreasing in u.
  double envelope(double u) const {
    double s = 0.0;
    for (Eigen::Index j = 0; j < w.size(); ++j) {
      const double a = w[j] * u * w[j] * u;
      s += (k[j] + lambda[j]) * std::abs(w[j]) / (1.0 + a);
    }
    return 0.5 * s;
  }
};

/// Shanks extrapolation via Wynn's epsilon algorithm, fed one partial sum at
/// a time; add() returns the current best (highest even-column) estimate.
class EpsilonTable {
 public:
  double add(double s) {
    std::vector<double> next;
    next.reserve(diag_.size() + 1);
    next.push_back(s);
    double below_prev = 0.0;
    for (std::size_t j = 0; j < diag_.size(); ++j) {
      const double denom = next[j] - diag_[j];
      double value;
      if (denom == 0.0 || !std::isfinite(denom)) {
        value = std::numeric_limits<double>::infinity();
      } else {
        value = below_prev + 1.0 / denom;
      }
      below_prev = diag_[j];
      next.push_back(value);
    }
    diag_ = std::move(next);
    std::size_t best = diag_.size() - 1;
    if (best % 2 == 1) --best;
    // fall back toward lower even columns if the top is not finite
    while (best > 1 && !std::isfinite(diag_[best])) best -= 2;
    return diag_[best];
  }

 private:
  std::vector<double> diag_;
};

/// Finds u > lo with f(u) = target, where f is monotone past lo. Newton with
/// doubling bracket fallback.
template <typename F, typename DF>
double solve_forward(const F& f, const DF& df, double lo, double target) {
  double flo = f(lo) - target;
  double step = std::abs(flo) / std::max(std::abs(df(lo)), 1e-300);
  double hi = lo + 1.25 * step + 1e-12 * (1.0 + lo);
  double fhi = f(hi) - target;
  int guard = 0;
  while (flo * fhi > 0.0 && guard++ < 200) {
    hi = lo + (hi - lo) * 2.0;
    fhi = f(hi) - target;
  }
  // bisection with Newton acceleration
  double a = lo, b = hi;
  for (int it = 0; it < 120; ++it) {
    double mid = 0.5 * (a + b);
    const double d = df(mid);
    if (d != 0.0) {
      const double newton = mid - (f(mid) - target) / d;
      if (newton > a && newton < b) mid = newton;
    }
    const double fm = f(mid) - target;
    if (fm == 0.0 || (b - a) <= 1e-14 * (1.0 + std::abs(b))) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      a = mid;
    } else {
      b = mid;
    }
  }
  return 0.5 * (a + b);
}

struct ChernoffBounds {
  // log Chernoff bound for P(Q' >= y) (side=+1) or P(Q' <= y) (side=-1),
  // from the closed-form MGF of Q' = sum w_j ncx2(k_j, lambda_j).
  static double log_bound(const GenChi2& g, double y, int side) {
    double s_cap = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < g.w.size(); ++j) {
      const double ws = side * g.w[j];
      if (ws > 0.0) s_cap = std::min(s_cap, 1.0 / (2.0 * ws));
    }
    if (!std::isfinite(s_cap)) s_cap = 1e8;
    double best = 0.0;  // s = 0 gives the trivial bound 1
    for (int i = 1; i <= 60; ++i) {
      const double s = s_cap * i / 61.0;
      double log_mgf = 0.0;
      bool ok = true;
      for (Eigen::Index j = 0; j < g.w.size(); ++j) {
        const double a = 1.0 - 2.0 * (side * s) * g.w[j];
        if (a <= 0.0) {
          ok = false;
          break;
        }
        log_mgf += -0.5 * g.k[j] * std::log(a) + g.lambda[j] * (side * s) * g.w[j] / a;
      }
      if (!ok) continue;
      best = std::min(best, log_mgf - side * s * y);
    }
    return best;
  }
};

CdfEstimate imhof_impl(const GenChi2& g, double x, double tol) {
  const double y = x - g.t;
  const bool all_pos = (g.w.array() > 0.0).all();
  const bool all_neg = (g.w.array() < 0.0).all();
  if (all_pos && y <= 0.0) return {0.0, 0.0};
  if (all_neg && y >= 0.0) return {1.0, 0.0};

  // Chernoff guards keep the quadrature away from extreme tails, where the
  // oscillation period explodes.
  GenChi2 shifted = g;
  shifted.t = 0.0;
  const double guard = std::log(tol / 10.0);
  if (ChernoffBounds::log_bound(shifted, y, -1) < guard) return {0.0, tol / 10.0};
  if (ChernoffBounds::log_bound(shifted, y, +1) < guard) return {1.0, tol / 10.0};

  const ImhofIntegrand f{g.w, g.k, g.lambda, y};
  const double w_abs_max = g.w.cwiseAbs().maxCoeff();
  const double w_abs_min = g.w.cwiseAbs().minCoeff();
  const double scale = (g.w.cwiseAbs().array() *
                        (g.k.cast<double>().array() + g.lambda.array())).sum();
  const double tol_tail = tol / 10.0;
  const double tol_head = 0.4 * tol;

  const int dof_total = g.k.sum();

  // Route A: plain truncation when the algebraic tail bound gives a cheap U.
  //   (1/pi) Int_U^inf exp(-log_rho)/u du <= (2/(pi K U^{K/2})) prod |w|^{-k/2}
  {
    double log_prod = 0.0;
    for (Eigen::Index j = 0; j < g.w.size(); ++j) {
      log_prod += 0.5 * g.k[j] * std::log(std::abs(g.w[j]));
    }
    const double log_u_alg =
        (std::log(2.0 / (kPi * dof_total * tol_tail)) - log_prod) * 2.0 / dof_total;
    const double u_alg = std::exp(log_u_alg);
    if (u_alg <= 400.0 / w_abs_min) {
      PanelResult head = adaptive_gk(f, 1e-300, u_alg, tol_head, 8000);
      const double err = head.error + tol_tail;
      if (err > tol) {
        throw NumericalError("cdf_imhof: quadrature did not reach tolerance", err);
      }
      const double cdf = 0.5 - (head.value) / kPi;
      return {std::clamp(cdf, 0.0, 1.0), err};
    }
  }

  // Route B: |y| too small for oscillation-based handling -> substitute
  // v = 1/u on the tail, which is smooth once y ~ 0.
  if (std::abs(y) <= 1e-10 * (1.0 + scale)) {
    const double u0 = 64.0 / w_abs_min;
    PanelResult head = adaptive_gk(f, 1e-300, u0, tol_head, 8000);
    auto tail_f = [&](double v) {
      const double u = 1.0 / v;
      return std::sin(f.theta(u)) * std::exp(-f.log_rho(u)) / v;
    };
    PanelResult tail = adaptive_gk(tail_f, 1e-300, 1.0 / u0, tol_tail, 4000);
    const double err = head.error + tail.error;
    if (err > tol) {
      throw NumericalError("cdf_imhof: quadrature did not reach tolerance", err);
    }
    const double cdf = 0.5 - (head.value + tail.value) / kPi;
    return {std::clamp(cdf, 0.0, 1.0), err};
  }

  // Route C: head up to the monotone-phase point, then alternating lobe sums
  // between successive zeros of sin(theta), accelerated by the epsilon
  // algorithm.
  double u0 = 1.0 / w_abs_max;
  while (f.envelope(u0) > 0.25 * std::abs(y)) u0 *= 2.0;

  PanelResult head = adaptive_gk(f, 1e-300, u0, tol_head, 8000);
  double integral = head.value;
  double err_quad = head.error;

  const double dirn = (y > 0.0) ? -1.0 : 1.0;
  const double th0 = f.theta(u0);
  double target = (y > 0.0 ? std::floor(th0 / kPi) : std::ceil(th0 / kPi)) * kPi;

  auto theta_fn = [&](double u) { return f.theta(u); };
  auto theta_dfn = [&](double u) { return f.theta_prime(u); };

  EpsilonTable eps;
  double partial = 0.0;
  double est_prev = std::numeric_limits<double>::quiet_NaN();
  double best_gap = std::numeric_limits<double>::infinity();
  double tail = std::numeric_limits<double>::quiet_NaN();
  double tail_err = std::numeric_limits<double>::infinity();
  double u = u0;
  const int max_lobes = 400;
  const double tol_lobe = tol / 200.0;

  for (int lobe = 0; lobe < max_lobes; ++lobe) {
    const double z = solve_forward(theta_fn, theta_dfn, u, target);
    PanelResult seg = adaptive_gk(f, u, z, tol_lobe, 200);
    u = z;
    target += dirn * kPi;
    if (lobe == 0) {
      // partial first lobe: same sign region, folded into the head
      integral += seg.value;
      err_quad += seg.error;
      continue;
    }
    partial += seg.value;
    err_quad += seg.error;
    const double est = eps.add(partial);
    if (std::isfinite(est) && !std::isnan(est_prev)) {
      const double gap = std::abs(est - est_prev);
      best_gap = std::min(best_gap, gap);
      if (lobe >= 6 && gap < 0.5 * tol_tail) {
        tail = est;
        tail_err = gap;
        break;
      }
    }
    est_prev = std::isfinite(est) ? est : est_prev;
    if (std::abs(seg.value) < 0.5 * tol_tail && lobe >= 3) {
      // alternating series: remainder below the last lobe magnitude
      tail = partial;
      tail_err = std::abs(seg.value);
      break;
    }
  }

  if (!std::isfinite(tail)) {
    throw NumericalError("cdf_imhof: oscillatory tail did not converge",
                         best_gap + err_quad);
  }
  const double err = err_quad + tail_err;
  if (err > tol) {
    throw NumericalError("cdf_imhof: quadrature did not reach tolerance", err);
  }
  const double cdf = 0.5 - (integral + tail) / kPi;
  return {std::clamp(cdf, 0.0, 1.0), err};
}

// ---------------------------------------------------------------------------
// Ruben series
// ---------------------------------------------------------------------------

/// Series P(Q <= x) = sum_m a_m F_{rho+2m}((x - t)/beta) with beta = min w.
/// The coefficients depend only on (w, k, lambda): they are built once and
/// reused across evaluation points. With beta = min w all a_m >= 0 and they
/// sum to 1, so 1 - sum_{m<=M} a_m bounds the truncation error.
class RubenSeries {
 public:
  RubenSeries(const GenChi2& g, int max_terms, double target_remainder) {
    t_ = g.t;
    const Eigen::Index n_terms = g.w.size();
    beta_ = g.w.minCoeff();
    rho_ = g.k.sum();

    double log_a0 = 0.0;
    std::vector<double> gamma(static_cast<std::size_t>(n_terms));
    std::vector<double> lam_w(static_cast<std::size_t>(n_terms));
    for (Eigen::Index j = 0; j < n_terms; ++j) {
      gamma[static_cast<std::size_t>(j)] = 1.0 - beta_ / g.w[j];
      lam_w[static_cast<std::size_t>(j)] = g.lambda[j] / g.w[j];
      log_a0 += -0.5 * g.lambda[j] + 0.5 * g.k[j] * std::log(beta_ / g.w[j]);
    }

    a_.reserve(64);
    a_.push_back(std::exp(log_a0));
    cum_a_ = a_[0];

    std::vector<double> gamma_pow(gamma);  // gamma_j^m, currently m = 1
    std::vector<double> gr;                // g_r, 1-based at index r-1
    gr.reserve(64);
    const std::size_t nj = gamma.size();
    for (int m = 1; m < max_terms && 1.0 - cum_a_ > target_remainder; ++m) {
      double grm = 0.0;
      for (std::size_t j = 0; j < nj; ++j) {
        const double prev_pow = (m == 1) ? 1.0 : gamma_pow[j] / std::max(gamma[j], 1e-300);
        grm += g.k[j] * gamma_pow[j] + m * beta_ * lam_w[j] * prev_pow;
      }
      gr.push_back(grm);
      double am = 0.0;
      for (int r = 1; r <= m; ++r) {
        am += gr[static_cast<std::size_t>(r - 1)] * a_[static_cast<std::size_t>(m - r)];
      }
      am /= 2.0 * m;
      a_.push_back(am);
      cum_a_ += am;
      for (std::size_t j = 0; j < nj; ++j) gamma_pow[j] *= gamma[j];
    }
    remainder_ = std::max(0.0, 1.0 - cum_a_);
  }

  double remainder() const { return remainder_; }

  CdfEstimate eval(double x) const {
    const double y = x - t_;
    if (y <= 0.0) return {0.0, 0.0};
    const double z = y / beta_;
    const double half_z = 0.5 * z;

    double f = boost::math::gamma_p(0.5 * rho_, half_z);
    // d_m = (z/2)^(rho/2+m) e^{-z/2} / Gamma(rho/2+m+1): downward CDF step
    double d = std::exp(0.5 * rho_ * std::log(half_z) - half_z -
                        std::lgamma(0.5 * rho_ + 1.0));
    double total = 0.0;
    for (std::size_t m = 0; m < a_.size(); ++m) {
      total += a_[m] * f;
      f = std::max(0.0, f - d);
      d *= half_z / (0.5 * rho_ + static_cast<double>(m) + 1.0);
    }
    // remaining terms all multiply CDFs no larger than the current f
    const double bound = remainder_ * f + 1e-15;
    return {std::clamp(total, 0.0, 1.0), bound};
  }

 private:
  double beta_ = 1.0;
  double rho_ = 1.0;
  double t_ = 0.0;
  std::vector<double> a_;
  double cum_a_ = 0.0;
  double remainder_ = 1.0;
};

}  // namespace

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

GenChi2::GenChi2(Eigen::VectorXd w_in, Eigen::VectorXi k_in, Eigen::VectorXd lambda_in,
                 double t_in)
    : w(std::move(w_in)), k(std::move(k_in)), lambda(std::move(lambda_in)), t(t_in) {
  const Eigen::Index m = w.size();
  if (m < 1 || k.size() != m || lambda.size() != m) {
    throw ArgumentError("GenChi2: w, k, lambda must have equal length >= 1");
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    if (w[j] == 0.0) throw ArgumentError("GenChi2: coefficients must be nonzero");
    if (k[j] < 1) throw ArgumentError("GenChi2: degrees of freedom must be >= 1");
    if (lambda[j] < 0.0) throw ArgumentError("GenChi2: noncentralities must be >= 0");
  }
  std::vector<double> sorted(w.data(), w.data() + m);
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t j = 1; j < sorted.size(); ++j) {
    const double sep = std::abs(sorted[j] - sorted[j - 1]);
    const double mag = std::max(std::abs(sorted[j]), std::abs(sorted[j - 1]));
    if (sep <= kCoeffSeparation * mag) {
      throw ArgumentError("GenChi2: coefficients must be pairwise distinct "
                          "(relative separation > 1e-8)");
    }
  }
}

GenChi2Mixture::GenChi2Mixture(Eigen::VectorXd weights_in, std::vector<GenChi2> components_in,
                               double truncation_mass_in)
    : weights(std::move(weights_in)),
      components(std::move(components_in)),
      truncation_mass(truncation_mass_in) {
  if (components.empty() || weights.size() != static_cast<Eigen::Index>(components.size())) {
    throw ArgumentError("GenChi2Mixture: weights and components must match and be nonempty");
  }
  if ((weights.array() <= 0.0).any()) {
    throw ArgumentError("GenChi2Mixture: weights must be positive");
  }
  const double sum = weights.sum();
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ArgumentError("GenChi2Mixture: weights sum to " + std::to_string(sum) +
                        ", expected 1 within 1e-6");
  }
  weights /= sum;
  if (truncation_mass < 0.0 || truncation_mass >= 1.0) {
    throw ArgumentError("GenChi2Mixture: truncation_mass must lie in [0, 1)");
  }
}

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

double mean(const GenChi2& g) {
  return (g.w.array() * (g.k.cast<double>().array() + g.lambda.array())).sum() + g.t;
}

double variance(const GenChi2& g) {
  return 2.0 *
         (g.w.array().square() * (g.k.cast<double>().array() + 2.0 * g.lambda.array())).sum();
}

double mixture_mean(const GenChi2Mixture& m) {
  double s = 0.0;
  for (int g = 0; g < m.size(); ++g) s += m.weights[g] * mean(m.components[static_cast<std::size_t>(g)]);
  return s;
}

double mixture_variance(const GenChi2Mixture& m) {
  const double mu = mixture_mean(m);
  double s = 0.0;
  for (int g = 0; g < m.size(); ++g) {
    const auto& c = m.components[static_cast<std::size_t>(g)];
    const double cm = mean(c);
    s += m.weights[g] * (variance(c) + cm * cm);
  }
  return s - mu * mu;
}

double chi_square_cdf(double dof, double x) {
  if (dof <= 0.0) throw ArgumentError("chi_square_cdf: dof must be positive");
  if (x <= 0.0) return 0.0;
  return boost::math::gamma_p(0.5 * dof, 0.5 * x);
}

// ---------------------------------------------------------------------------
// CDFs
// ---------------------------------------------------------------------------

CdfEstimate cdf_imhof(const GenChi2& g, double x, double tol) {
  if (!(tol > 0.0) || tol > 1e-3) {
    throw ArgumentError("cdf_imhof: tol must lie in (0, 1e-3]");
  }
  return imhof_impl(g, x, tol);
}

CdfEstimate cdf_ruben(const GenChi2& g, double x, int terms) {
  if (!g.all_positive()) {
    throw MethodInapplicableError(
        "cdf_ruben: series requires all positive coefficients; use cdf_imhof");
  }
  if (terms < 50) throw ArgumentError("cdf_ruben: terms must be >= 50");
  RubenSeries series(g, terms, 1e-17);
  return series.eval(x);
}

// ---------------------------------------------------------------------------
// MixtureCdf
// ---------------------------------------------------------------------------

struct MixtureCdf::Impl {
  Eigen::VectorXd weights;
  std::vector<GenChi2> raw;             // for the inversion fallback
  std::vector<std::unique_ptr<RubenSeries>> series;  // null -> use cdf_imhof
  std::vector<double> budgets;          // per-component error budget
  double tol = 1e-9;
};

MixtureCdf::MixtureCdf(const GenChi2Mixture& m, double tol) {
  if (!(tol > 0.0) || tol > 1e-3) {
    throw ArgumentError("MixtureCdf: tol must lie in (0, 1e-3]");
  }
  auto impl = std::make_unique<Impl>();
  impl->weights = m.weights;
  impl->raw = m.components;
  impl->tol = tol;
  impl->series.resize(m.components.size());
  impl->budgets.resize(m.components.size());
  const double count = static_cast<double>(m.size());
  for (std::size_t g = 0; g < m.components.size(); ++g) {
    const GenChi2& comp = m.components[g];
    // error budget scaled by component weight: sum_g eta_g budget_g = tol
    const double budget =
        std::min(1e-3, tol / (count * m.weights[static_cast<Eigen::Index>(g)]));
    impl->budgets[g] = budget;
    if (!comp.all_positive()) continue;
    auto s = std::make_unique<RubenSeries>(comp, 8192, 0.5 * budget);
    if (s->remainder() <= budget) {
      impl->series[g] = std::move(s);
    }
  }
  impl_ = std::move(impl);
}

MixtureCdf::MixtureCdf(MixtureCdf&&) noexcept = default;
MixtureCdf::~MixtureCdf() = default;

double MixtureCdf::tol() const { return impl_->tol; }

double MixtureCdf::operator()(double x) const {
  double total = 0.0;
  for (std::size_t g = 0; g < impl_->raw.size(); ++g) {
    const double eta = impl_->weights[static_cast<Eigen::Index>(g)];
    if (impl_->series[g]) {
      total += eta * impl_->series[g]->eval(x).value;
    } else {
      total += eta * imhof_impl(impl_->raw[g], x, impl_->budgets[g]).value;
    }
  }
  return std::clamp(total, 0.0, 1.0);
}

double mixture_cdf(const GenChi2Mixture& m, double x, double tol) {
  return MixtureCdf(m, tol)(x);
}

// ---------------------------------------------------------------------------
// Quantile
// ---------------------------------------------------------------------------

double quantile(const GenChi2Mixture& m, double p, double tol) {
  if (!(p > 0.0 && p < 1.0)) throw ArgumentError("quantile: p must lie in (0, 1)");
  if (!(tol > 0.0) || tol > 1e-3) throw ArgumentError("quantile: tol must lie in (0, 1e-3]");

  const double cdf_tol = std::max(tol / 100.0, 1e-12);
  const MixtureCdf cdf(m, cdf_tol);

  double lo = std::numeric_limits<double>::infinity();
  for (const auto& c : m.components) lo = std::min(lo, c.t);
  const double mu = mixture_mean(m);
  const double sd = std::sqrt(std::max(0.0, mixture_variance(m)));
  double hi = mu + 10.0 * sd;
  if (!(hi > lo)) hi = lo + std::max(1.0, std::abs(lo));

  double f_lo = cdf(lo);
  double f_hi = cdf(hi);
  int doublings = 0;
  while (f_hi < p) {
    const double width = hi - lo;
    hi += width;
    f_hi = cdf(hi);
    if (++doublings > 60) {
      throw NumericalError("quantile: upper bracket not found within 60 doublings",
                           std::abs(f_hi - p));
    }
  }
  doublings = 0;
  while (f_lo > p) {
    const double width = hi - lo;
    lo -= width;
    f_lo = cdf(lo);
    if (++doublings > 60) {
      throw NumericalError("quantile: lower bracket not found within 60 doublings",
                           std::abs(f_lo - p));
    }
  }

  double best_x = 0.5 * (lo + hi);
  double best_gap = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 300; ++it) {
    const double width = hi - lo;
    double x;
    if (f_hi > f_lo) {
      x = lo + (p - f_lo) / (f_hi - f_lo) * width;  // secant through bracket
      const double margin = 0.02 * width;
      x = std::clamp(x, lo + margin, hi - margin);
    } else {
      x = lo + 0.5 * width;
    }
    const double fx = cdf(x);
    const double gap = std::abs(fx - p);
    if (gap < best_gap) {
      best_gap = gap;
      best_x = x;
    }
    if (gap <= tol) return x;
    if (fx < p) {
      lo = x;
      f_lo = fx;
    } else {
      hi = x;
      f_hi = fx;
    }
    if (width <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(hi))) {
      break;
    }
  }
  if (best_gap <= tol) return best_x;
  throw NumericalError("quantile: refinement stalled above tolerance", best_gap);
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

std::vector<double> sample_mixture(const GenChi2Mixture& m, int count, std::uint64_t seed) {
  if (count < 1) throw ArgumentError("sample_mixture: count must be >= 1");

  std::vector<double> cumulative(static_cast<std::size_t>(m.size()));
  double acc = 0.0;
  for (int g = 0; g < m.size(); ++g) {
    acc += m.weights[g];
    cumulative[static_cast<std::size_t>(g)] = acc;
  }
  cumulative.back() = 1.0;

  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double u = unif(rng);
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
    const auto g = static_cast<std::size_t>(std::distance(cumulative.begin(), it));
    const GenChi2& c = m.components[g];
    double q = c.t;
    for (Eigen::Index j = 0; j < c.w.size(); ++j) {
      // noncentral chi-square: shift the first normal by sqrt(lambda_j)
      double chi = 0.0;
      const double delta = std::sqrt(c.lambda[j]);
      for (int d = 0; d < c.k[j]; ++d) {
        const double z = normal(rng) + (d == 0 ? delta : 0.0);
        chi += z * z;
      }
      q += c.w[j] * chi;
    }
    out[static_cast<std::size_t>(i)] = q;
  }
  return out;
}

}  // namespace gmnds
