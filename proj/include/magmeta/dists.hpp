#pragma once

// Special functions, distribution functions and samplers used throughout the
// library. Everything here is pure except the samplers, which advance the
// supplied stream.

#include "magmeta/rng.hpp"

namespace magmeta::dists {

/// Parameters of the noncentral F distribution F_{nu1,nu2}(lambda2).
/// Degrees of freedom are integers; noncentrality is nonnegative.
struct NoncentralFParams {
  int nu1 = 1;
  int nu2 = 1;
  double lambda2 = 0.0;

  /// Throws std::domain_error if any field is out of range.
  void validate() const;
};

/// First two moments of |y| for y ~ N(mu, sigma^2).
struct FoldedNormalMoments {
  double mean_f = 0.0;
  double var_f = 0.0;
};

// ---------------------------------------------------------------------------
// Normal
// ---------------------------------------------------------------------------

double normal_pdf(double x) noexcept;
double normal_cdf(double x) noexcept;

/// Inverse of normal_cdf. Throws std::domain_error unless 0 < p < 1.
double normal_quantile(double p);

// ---------------------------------------------------------------------------
// Gamma / beta family
// ---------------------------------------------------------------------------

/// log B(a, b), accurate when one argument is large.
double log_beta(double a, double b);

/// Regularized incomplete beta I_x(a, b).
double reg_inc_beta(double x, double a, double b);

/// Regularized lower and upper incomplete gamma P(a, x), Q(a, x).
double reg_lower_gamma(double a, double x);
double reg_upper_gamma(double a, double x);

// ---------------------------------------------------------------------------
// Central distributions
// ---------------------------------------------------------------------------

double chi2_cdf(double x, int k);
/// Upper tail 1 - chi2_cdf, computed without cancellation.
double chi2_sf(double x, int k);

double central_f_cdf(double x, int nu1, int nu2);

double student_t_cdf(double t, int df);
double student_t_quantile(double p, int df);

// ---------------------------------------------------------------------------
// Noncentral distributions
// ---------------------------------------------------------------------------

/// P(F <= x) for F ~ F_{nu1,nu2}(lambda2). Poisson mixture of incomplete
/// beta terms, summed outward from the Poisson mode.
double noncentral_f_cdf(double x, const NoncentralFParams& params);

/// P(X <= x) for X ~ chi2_k(lambda2).
double noncentral_chi2_cdf(double x, int k, double lambda2);

/// Noncentrality lambda2 >= 0 with noncentral_f_cdf(x; nu1, nu2, lambda2) ==
/// target. Returns 0 when even lambda2 = 0 gives a CDF below target.
double solve_ncp(double x, int nu1, int nu2, double target);

/// Same as solve_ncp, for the noncentral chi-square CDF.
double solve_ncp_chi2(double x, int k, double target);

// ---------------------------------------------------------------------------
// Effect-size helpers
// ---------------------------------------------------------------------------

FoldedNormalMoments folded_normal_moments(double mu, double sigma);

/// Hedges' small-sample factor J(m) = Gamma(m/2) / (sqrt(m/2) Gamma((m-1)/2)).
double hedges_j(int m);
/// 1 - 3 / (4m - 1).
double hedges_j_approx(int m);

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

double sample_normal(Rng& rng, double mean = 0.0, double sd = 1.0);
double sample_chi2(Rng& rng, int df);

/// scale * Z / sqrt(W / m) with Z ~ N(ncp, 1), W ~ chi2_m.
/// With scale = n_eff^{-1/2} and ncp = sqrt(n_eff) * delta this is the
/// sampling law of Cohen's d.
double sample_scaled_noncentral_t(int m, double ncp, double scale, Rng& rng);

/// Central F_{1,m} variate.
double sample_f1(int m, Rng& rng);

}  // namespace magmeta::dists
