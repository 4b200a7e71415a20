#pragma once

// Per-study effect measures for two-arm studies: Cohen's d, Hedges' g, the
// unbiased estimator of the squared standardized mean difference and its
// variance, and the single-study F-profile interval.

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace magmeta {

/// Arm-level summary statistics of a study.
struct ArmMoments {
  double mean_t = 0.0;
  double mean_c = 0.0;
  double sd_t = 1.0;
  double sd_c = 1.0;
};

/// Two-arm study input, either raw arm summaries or a precomputed d.
struct StudySummary {
  std::string id;
  int n_t = 0;
  int n_c = 0;
  std::optional<ArmMoments> arms;  ///< raw form when set
  double d = 0.0;                  ///< used only when arms is empty

  static StudySummary from_arms(int n_t, int n_c, ArmMoments arms, std::string id = {});
  static StudySummary from_d(int n_t, int n_c, double d, std::string id = {});

  /// Throws std::domain_error when n_t < 2, n_c < 2, or a raw SD is not positive.
  void validate() const;
};

/// Derived per-study quantities. Immutable once built by derive_effect.
struct EffectRecord {
  double d = 0.0;
  double g = 0.0;
  int m = 0;             ///< degrees of freedom n_t + n_c - 2
  double n_eff = 0.0;    ///< n_t n_c / (n_t + n_c)
  double delta2_hat = 0.0;
  std::optional<double> var_delta2_hat;  ///< absent when m <= 4
  double var_g = 0.0;
};

/// Nominal (1 - alpha) interval with a method tag.
struct IntervalEstimate {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  std::string method;

  bool contains(double value) const { return lower <= value && value <= upper; }
};

double pooled_sd(int n_t, int n_c, double sd_t, double sd_c);
double effective_n(int n_t, int n_c);

/// Unbiased estimate ((m - 2)/m) d^2 - 1/n_eff of delta^2.
double delta2_unbiased(double d, int m, double n_eff);

/// Exact variance of the unbiased delta^2 estimator at the true delta^2.
/// Requires m > 4.
double var_delta2_true(double delta2, int m, double n_eff);

/// Unbiased estimate of delta^4. Requires m > 4.
double delta4_unbiased(double d, int m, double n_eff);

/// Unbiased estimate of var_delta2_true. Requires m > 4; may be negative.
double var_delta2_unbiased(double d, int m, double n_eff);

/// Large-sample variance of Hedges' g: 1/n_eff + g^2 / (2m).
double var_hedges_g(double g, int m, double n_eff);

EffectRecord derive_effect(const StudySummary& study);

/// True when the record can take part in variance-weighted procedures.
inline bool usable_for_weighting(const EffectRecord& e) { return e.m > 4; }

/// Copies the records with m > 4, warning once for every record dropped.
std::vector<EffectRecord> weighting_subset(std::span<const EffectRecord> effects);

struct SteigerInterval {
  IntervalEstimate delta2;
  IntervalEstimate abs_delta;
};

/// F-profile interval for delta^2 from one study, by inverting the noncentral
/// F_{1,m} CDF of n_eff d^2 in its noncentrality. The |delta| interval is the
/// elementwise square root.
SteigerInterval steiger_ci(double d, int m, double n_eff, double alpha);

}  // namespace magmeta
