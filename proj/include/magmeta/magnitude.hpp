#pragma once

// Inference for the squared standardized mean difference delta^2: common-
// effect estimation and testing, random-effects point estimates, intervals
// built by squaring signed-SMD intervals, and conditional Lambda procedures.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "magmeta/effects.hpp"
#include "magmeta/pooling.hpp"
#include "magmeta/rng.hpp"

namespace magmeta {

struct MagnitudeEstimate {
  double delta2 = 0.0;            ///< delta2_hat - tau2_hat, may be negative
  double delta2_truncated = 0.0;  ///< max(delta2, 0)
  Tau2Method tau2_method = Tau2Method::MP;
};

/// Null reference for tests of delta^2 = 0.
enum class Reference { Chi2K, BootstrapSumF };

std::string_view to_string(Reference ref);
/// Accepts "chi2_K" or "bootstrap_sum_F"; throws std::domain_error otherwise.
Reference parse_reference(std::string_view tag);

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  Reference reference = Reference::Chi2K;
  bool reject_at_05 = false;
};

/// Empirical distribution of sum_i F_{1, m_i} (central). Immutable once built.
class SumFDistribution {
 public:
  SumFDistribution() = default;
  explicit SumFDistribution(std::vector<double> draws);

  std::size_t size() const { return draws_.size(); }
  /// (1 + #{draws >= x}) / (B + 1).
  double upper_tail_p(double x) const;
  /// Empirical p-quantile (type-7 interpolation).
  double quantile(double p) const;
  double mean() const;
  std::span<const double> draws() const { return draws_; }

 private:
  std::vector<double> draws_;  // sorted ascending
};

/// B independent draws of sum_i F_{1, dfs[i]}. Deterministic given rng.
SumFDistribution bootstrap_sum_f(std::span<const int> dfs, std::size_t b, Rng& rng);

/// Common-effect estimate (sum n_eff)^{-1} [sum ((m-2)/m) n_eff d^2 - K].
double ce_delta2(std::span<const EffectRecord> effects);

/// Test of delta^2 = 0 with statistic sum n_eff d^2. The chi-square overload
/// only accepts Reference::Chi2K.
TestResult ce_test(std::span<const EffectRecord> effects);
TestResult ce_test(std::span<const EffectRecord> effects, const SumFDistribution& null_dist);
TestResult ce_test(std::span<const EffectRecord> effects, Reference ref, std::size_t bootstrap_b,
                   Rng& rng);

/// Chi-square profile interval for delta^2 under the common-effect model.
IntervalEstimate ce_profile_ci(std::span<const EffectRecord> effects, double alpha);

MagnitudeEstimate rem_point_estimate(std::span<const EffectRecord> effects,
                                     const Tau2Estimate& tau2);

/// Squares a signed interval for delta.
IntervalEstimate naive_ci_delta2(const IntervalEstimate& signed_ci);

/// Probability that the squared interval also covers delta through the mirror
/// image of the signed interval, at delta / v = r. Critical values come from
/// the normal (df <= 0) or t_df distribution.
double extra_coverage_same_sign(double r, double alpha, double beta, int df = 0);
double extra_coverage_straddling(double r, double alpha, double beta, int df = 0);

struct CorrectedInterval {
  IntervalEstimate interval;  ///< for delta^2
  bool straddling = false;    ///< the signed interval at alpha covered zero
  double beta = 0.0;          ///< upper-tail share (straddling case)
  double alpha_used = 0.0;    ///< inflated alpha (same-sign case)
};

/// Corrected delta^2 interval from a pooled signed estimate. When the signed
/// interval covers zero, beta is chosen so that -L = U and (0, L^2) is
/// returned; otherwise alpha is inflated to offset the mirror coverage, unless
/// inflate_same_sign is false, in which case the naive squared interval is kept.
CorrectedInterval corrected_ci_delta2(const PooledDelta& pooled, double alpha, Critical crit,
                                      bool inflate_same_sign = true);

/// Lambda(tau^2) = sum n_eff d^2 / (1 + n_eff tau^2).
double lambda_statistic(std::span<const EffectRecord> effects, double tau2);

/// Test of delta^2 = 0 with Lambda at a given tau^2 value. Pass null_dist
/// for the bootstrap reference, nullptr for chi2_K.
TestResult lambda_test(std::span<const EffectRecord> effects, double tau2,
                       const SumFDistribution* null_dist);

/// Lambda test at the estimated tau^2.
TestResult conditional_test(std::span<const EffectRecord> effects, const Tau2Estimate& tau2);
TestResult conditional_test(std::span<const EffectRecord> effects, const Tau2Estimate& tau2,
                            const SumFDistribution& null_dist);
TestResult conditional_test(std::span<const EffectRecord> effects, const Tau2Estimate& tau2,
                            Reference ref, std::size_t bootstrap_b, Rng& rng);

/// Profile interval for delta^2 given tau2_hat, inverting the chi2_K law of
/// Lambda(tau2_hat) in its noncentrality delta^2 sum n_eff / (1 + n_eff tau2).
IntervalEstimate conditional_profile_ci(std::span<const EffectRecord> effects,
                                        const Tau2Estimate& tau2, double alpha);

}  // namespace magmeta
