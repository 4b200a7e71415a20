#include "magmeta/dists.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace magmeta::dists {
namespace {

constexpr double kLnSqrt2Pi = 0.918938533204672741780329736406;  // log(sqrt(2*pi))

[[noreturn]] void domain(const std::string& what) { throw std::domain_error(what); }

// Stirling remainder lgamma(x) - [(x - 1/2) log x - x + log sqrt(2 pi)].
double stirling_remainder(double x) {
  if (x < 10.0) {
    return std::lgamma(x) - ((x - 0.5) * std::log(x) - x + kLnSqrt2Pi);
  }
  const double r = 1.0 / x;
  const double r2 = r * r;
  // Bernoulli coefficients B_2k / (2k (2k - 1)), k = 1..8.
  return r * (1.0 / 12 +
              r2 * (-1.0 / 360 +
                    r2 * (1.0 / 1260 +
                          r2 * (-1.0 / 1680 +
                                r2 * (1.0 / 1188 +
                                      r2 * (-691.0 / 360360 +
                                            r2 * (1.0 / 156 + r2 * (-3617.0 / 122400))))))));
}

// Loader's deviance term bd0(x, np) = x log(x/np) + np - x, stable near x == np.
double bd0(double x, double np) {
  if (std::fabs(x - np) < 0.1 * (x + np)) {
    double v = (x - np) / (x + np);
    double s = (x - np) * v;
    double ej = 2.0 * x * v;
    v *= v;
    for (int j = 1; j < 1000; ++j) {
      ej *= v;
      const double s1 = s + ej / (2 * j + 1);
      if (s1 == s) return s1;
      s = s1;
    }
  }
  return x * std::log(x / np) + np - x;
}

// log( x^a e^{-x} / Gamma(a + 1) ).
double log_gamma_front(double a, double x) {
  if (a < 10.0) return a * std::log(x) - x - std::lgamma(a + 1.0);
  return -bd0(a, x) - 0.5 * std::log(2.0 * std::numbers::pi * a) - stirling_remainder(a);
}

// lgamma(q + p) - lgamma(q) for p > 0.
double lgamma_ratio(double q, double p) {
  if (q < 10.0 || p + q < 10.0) return std::lgamma(q + p) - std::lgamma(q);
  const double corr = stirling_remainder(q) - stirling_remainder(p + q);
  return -(p + corr + (q - 0.5) * std::log1p(-p / (p + q)) - p * std::log(p + q));
}

// log of x^a (1-x)^b / (a B(a, b)): the gap I_x(a, b) - I_x(a + 1, b).
double log_beta_term(double x, double a, double b) {
  return a * std::log(x) + b * std::log1p(-x) - std::log(a) - log_beta(a, b);
}

// Sum_j w_j f(a0 + j) with Poisson(half_lambda) weights w_j, where f is a
// regularized incomplete function that satisfies
//   f(a + 1) = f(a) - t(a),   t(a + 1) = t(a) * up_ratio(a).
// Starts at the Poisson mode and walks outward until the neglected Poisson
// mass is below 1e-14. Weights are carried relative to the mode and
// normalized by their visited sum.
template <class UpRatio>
double poisson_mixture(double half_lambda, double a0, double f_mode, double log_t_mode,
                       UpRatio up_ratio) {
  constexpr double kTail = 5e-15;
  constexpr double kLogFloor = -650.0;
  const double mode = std::floor(half_lambda);
  const long j0 = static_cast<long>(mode);
  const double a_mode = a0 + mode;

  double sum = f_mode;
  double weight_total = 1.0;

  // Term tracked directly or, while it would underflow, in log form.
  struct Term {
    double value;
    double log_value;
    bool in_log;
    void scale(double ratio) {
      if (in_log) {
        log_value += std::log(ratio);
        value = std::exp(log_value);
        if (log_value > kLogFloor) in_log = false;
      } else {
        value *= ratio;
      }
    }
  };

  // Downward: f(a - 1) = f(a) + t(a - 1).
  {
    Term t{std::exp(log_t_mode), log_t_mode, log_t_mode < kLogFloor};
    double f = f_mode;
    double w = 1.0;
    for (long j = j0 - 1; j >= 0; --j) {
      const double a = a0 + static_cast<double>(j);
      t.scale(1.0 / up_ratio(a));
      f += t.value;
      w *= static_cast<double>(j + 1) / half_lambda;
      sum += w * std::min(f, 1.0);
      weight_total += w;
      const double r = static_cast<double>(j) / half_lambda;
      if (w * r / (1.0 - r) < kTail * weight_total) break;
    }
  }

  // Upward: f(a + 1) = f(a) - t(a).
  {
    Term t{std::exp(log_t_mode), log_t_mode, log_t_mode < kLogFloor};
    double f = f_mode;
    double w = 1.0;
    double a = a_mode;
    const long cap = j0 + 200 + static_cast<long>(60.0 * std::sqrt(half_lambda + 1.0));
    for (long j = j0 + 1; j <= cap; ++j) {
      // Once f has decayed to nothing only the weights still need summing.
      if (f > 0.0) {
        f -= t.value;
        if (f > 0.0) {
          t.scale(up_ratio(a));
          a += 1.0;
        } else {
          f = 0.0;
        }
      }
      w *= half_lambda / static_cast<double>(j);
      sum += w * f;
      weight_total += w;
      const double r = half_lambda / static_cast<double>(j + 1);
      if (r < 1.0 && w * r / (1.0 - r) < kTail * weight_total) break;
    }
  }
  return std::clamp(sum / weight_total, 0.0, 1.0);
}

// Bisection for the noncentrality at which a CDF that decreases in the
// noncentrality equals target.
template <class Cdf>
double solve_decreasing(Cdf cdf, double target, double initial_hi) {
  constexpr double kProbTol = 1e-12;
  constexpr int kMaxDoublings = 200;
  const double c0 = cdf(0.0);
  if (c0 <= target) return 0.0;

  double lo = 0.0;
  double hi = std::max(initial_hi, 1.0);
  int doublings = 0;
  while (cdf(hi) > target) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > kMaxDoublings) {
      throw std::runtime_error("solve_ncp: could not bracket the noncentrality");
    }
  }
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double c = cdf(mid);
    if (std::fabs(c - target) <= kProbTol) return mid;
    if (c > target) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
  }
  return 0.5 * (lo + hi);
}

void require_df(int df, const char* what) {
  if (df < 1) domain(std::string(what) + ": degrees of freedom must be >= 1");
}

}  // namespace

void NoncentralFParams::validate() const {
  if (nu1 < 1 || nu2 < 1) domain("noncentral F: degrees of freedom must be >= 1");
  if (!(lambda2 >= 0.0) || !std::isfinite(lambda2)) {
    domain("noncentral F: noncentrality must be finite and >= 0");
  }
}

// ---------------------------------------------------------------------------

double normal_pdf(double x) noexcept {
  return std::exp(-0.5 * x * x - kLnSqrt2Pi);
}

double normal_cdf(double x) noexcept {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) domain("normal_quantile: p must lie in (0, 1)");

  // Acklam's rational approximation, refined by Halley steps on erfc.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  for (int i = 0; i < 2; ++i) {
    // Work in the tail that keeps the residual well conditioned.
    const double e = x < 0.0 ? normal_cdf(x) - p : (1.0 - p) - normal_cdf(-x);
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

// ---------------------------------------------------------------------------

double log_beta(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) domain("log_beta: arguments must be positive");
  const double p = std::min(a, b);
  const double q = std::max(a, b);
  if (p >= 10.0) {
    const double corr = stirling_remainder(p) + stirling_remainder(q) - stirling_remainder(p + q);
    return -0.5 * std::log(q) + kLnSqrt2Pi + corr + (p - 0.5) * std::log(p / (p + q)) +
           q * std::log1p(-p / (p + q));
  }
  if (q >= 10.0) {
    const double corr = stirling_remainder(q) - stirling_remainder(p + q);
    return std::lgamma(p) + corr + p - p * std::log(p + q) +
           (q - 0.5) * std::log1p(-p / (p + q));
  }
  return std::lgamma(p) + std::lgamma(q) - std::lgamma(p + q);
}

double reg_inc_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) domain("reg_inc_beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) domain("reg_inc_beta: x must lie in [0, 1]");
  return boost::math::ibeta(a, b, x);
}

double reg_lower_gamma(double a, double x) {
  if (!(a > 0.0)) domain("reg_lower_gamma: a must be positive");
  if (!(x >= 0.0)) domain("reg_lower_gamma: x must be >= 0");
  if (std::isinf(x)) return 1.0;
  return boost::math::gamma_p(a, x);
}

double reg_upper_gamma(double a, double x) {
  if (!(a > 0.0)) domain("reg_upper_gamma: a must be positive");
  if (!(x >= 0.0)) domain("reg_upper_gamma: x must be >= 0");
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(a, x);
}

// ---------------------------------------------------------------------------

double chi2_cdf(double x, int k) {
  require_df(k, "chi2_cdf");
  if (!(x > 0.0)) return 0.0;
  return reg_lower_gamma(0.5 * k, 0.5 * x);
}

double chi2_sf(double x, int k) {
  require_df(k, "chi2_sf");
  if (!(x > 0.0)) return 1.0;
  return reg_upper_gamma(0.5 * k, 0.5 * x);
}

double central_f_cdf(double x, int nu1, int nu2) {
  require_df(nu1, "central_f_cdf");
  require_df(nu2, "central_f_cdf");
  if (!(x > 0.0)) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double y = nu1 * x / (nu1 * x + nu2);
  return reg_inc_beta(y, 0.5 * nu1, 0.5 * nu2);
}

double student_t_cdf(double t, int df) {
  require_df(df, "student_t_cdf");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  if (t == 0.0) return 0.5;
  const double nu = df;
  const double tail = 0.5 * reg_inc_beta(nu / (nu + t * t), 0.5 * nu, 0.5);
  return t > 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile(double p, int df) {
  require_df(df, "student_t_quantile");
  if (!(p > 0.0 && p < 1.0)) domain("student_t_quantile: p must lie in (0, 1)");
  if (p == 0.5) return 0.0;
  if (df == 1) {
    return p < 0.5 ? -1.0 / std::tan(std::numbers::pi * p)
                   : 1.0 / std::tan(std::numbers::pi * (1.0 - p));
  }
  if (df == 2) return (2.0 * p - 1.0) / std::sqrt(2.0 * p * (1.0 - p));

  // Solve in the lower tail, where the CDF is evaluated without cancellation.
  if (p > 0.5) return -student_t_quantile(1.0 - p, df);

  const double nu = df;
  // Cornish-Fisher start, then safeguarded Newton.
  const double z = normal_quantile(p);
  const double z2 = z * z;
  double t = z + z * (z2 + 1.0) / (4.0 * nu) +
             z * ((5.0 * z2 + 16.0) * z2 + 3.0) / (96.0 * nu * nu) +
             z * (((3.0 * z2 + 19.0) * z2 + 17.0) * z2 - 15.0) / (384.0 * nu * nu * nu);

  const double log_norm = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                          0.5 * std::log(nu * std::numbers::pi);
  auto pdf = [&](double u) { return std::exp(log_norm - 0.5 * (nu + 1.0) * std::log1p(u * u / nu)); };

  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 200; ++it) {
    const double f = student_t_cdf(t, df) - p;
    if (f == 0.0) return t;
    if (f < 0.0) {
      lo = t;
    } else {
      hi = t;
    }
    double next = t - f / pdf(t);
    if (!(next > lo && next < hi)) {
      if (std::isfinite(lo) && std::isfinite(hi)) {
        next = 0.5 * (lo + hi);
      } else {
        next = std::isfinite(lo) ? lo + std::max(1.0, std::fabs(lo)) : hi - std::max(1.0, std::fabs(hi));
      }
    }
    if (std::fabs(next - t) <= 1e-14 * std::max(1.0, std::fabs(t))) return next;
    t = next;
  }
  return t;
}

// ---------------------------------------------------------------------------

double noncentral_f_cdf(double x, const NoncentralFParams& params) {
  params.validate();
  if (!(x >= 0.0)) domain("noncentral_f_cdf: x must be >= 0");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double a0 = 0.5 * params.nu1;
  const double b = 0.5 * params.nu2;
  const double y = params.nu1 * x / (params.nu1 * x + params.nu2);
  if (params.lambda2 == 0.0) return reg_inc_beta(y, a0, b);
  if (y >= 1.0) return 1.0;

  const double half_lambda = 0.5 * params.lambda2;
  const double a_mode = a0 + std::floor(half_lambda);
  const double f_mode = reg_inc_beta(y, a_mode, b);
  const double log_t = log_beta_term(y, a_mode, b);
  return poisson_mixture(half_lambda, a0, f_mode, log_t,
                         [y, b](double a) { return y * (a + b) / (a + 1.0); });
}

double noncentral_chi2_cdf(double x, int k, double lambda2) {
  require_df(k, "noncentral_chi2_cdf");
  if (!(lambda2 >= 0.0) || !std::isfinite(lambda2)) {
    domain("noncentral_chi2_cdf: noncentrality must be finite and >= 0");
  }
  if (!(x >= 0.0)) domain("noncentral_chi2_cdf: x must be >= 0");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double a0 = 0.5 * k;
  const double y = 0.5 * x;
  if (lambda2 == 0.0) return reg_lower_gamma(a0, y);

  const double half_lambda = 0.5 * lambda2;
  const double a_mode = a0 + std::floor(half_lambda);
  const double f_mode = reg_lower_gamma(a_mode, y);
  const double log_t = log_gamma_front(a_mode, y);
  return poisson_mixture(half_lambda, a0, f_mode, log_t,
                         [y](double a) { return y / (a + 1.0); });
}

double solve_ncp(double x, int nu1, int nu2, double target) {
  require_df(nu1, "solve_ncp");
  require_df(nu2, "solve_ncp");
  if (!(x > 0.0)) domain("solve_ncp: x must be positive");
  if (!(target > 0.0 && target < 1.0)) domain("solve_ncp: target must lie in (0, 1)");
  return solve_decreasing(
      [&](double lambda2) { return noncentral_f_cdf(x, {nu1, nu2, lambda2}); }, target,
      nu1 * x);
}

double solve_ncp_chi2(double x, int k, double target) {
  require_df(k, "solve_ncp_chi2");
  if (!(x > 0.0)) domain("solve_ncp_chi2: x must be positive");
  if (!(target > 0.0 && target < 1.0)) domain("solve_ncp_chi2: target must lie in (0, 1)");
  return solve_decreasing([&](double lambda2) { return noncentral_chi2_cdf(x, k, lambda2); },
                          target, x);
}

// ---------------------------------------------------------------------------

FoldedNormalMoments folded_normal_moments(double mu, double sigma) {
  if (!(sigma > 0.0)) domain("folded_normal_moments: sigma must be positive");
  const double z = mu / sigma;
  const double mean = 2.0 * sigma * normal_pdf(z) + mu * (1.0 - 2.0 * normal_cdf(-z));
  const double var = mu * mu + sigma * sigma - mean * mean;
  return {mean, std::max(var, 0.0)};
}

double hedges_j(int m) {
  if (m < 2) domain("hedges_j: m must be >= 2");
  const double half = 0.5 * m;
  return std::exp(lgamma_ratio(0.5 * (m - 1), 0.5) - 0.5 * std::log(half));
}

double hedges_j_approx(int m) {
  if (m < 2) domain("hedges_j_approx: m must be >= 2");
  return 1.0 - 3.0 / (4.0 * m - 1.0);
}

// ---------------------------------------------------------------------------

double sample_normal(Rng& rng, double mean, double sd) {
  return std::normal_distribution<double>(mean, sd)(rng);
}

double sample_chi2(Rng& rng, int df) {
  require_df(df, "sample_chi2");
  return std::chi_squared_distribution<double>(df)(rng);
}

double sample_scaled_noncentral_t(int m, double ncp, double scale, Rng& rng) {
  require_df(m, "sample_scaled_noncentral_t");
  const double z = sample_normal(rng, ncp, 1.0);
  const double w = sample_chi2(rng, m);
  return scale * z / std::sqrt(w / m);
}

double sample_f1(int m, Rng& rng) {
  require_df(m, "sample_f1");
  const double z = sample_normal(rng);
  const double w = sample_chi2(rng, m);
  return z * z / (w / m);
}

}  // namespace magmeta::dists
