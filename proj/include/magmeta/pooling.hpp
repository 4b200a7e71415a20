#pragma once

// Heterogeneity (tau^2) estimation and pooled inference for the signed
// standardized mean difference.

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "magmeta/effects.hpp"

namespace magmeta {

enum class Tau2Method { MP, KDB, SSC };

std::string_view to_string(Tau2Method method);

struct Tau2Estimate {
  double value = 0.0;
  Tau2Method method = Tau2Method::MP;
  bool truncated = false;  ///< the moment equation had no nonnegative root
};

/// Reference distribution for interval critical values.
enum class Critical { Normal, StudentT };

struct PooledDelta {
  double estimate = 0.0;
  double std_err = 0.0;
  std::vector<double> weights;
  std::string method;
};

struct PooledResult {
  PooledDelta pooled;
  IntervalEstimate interval;
};

/// Q = sum w_i (g_i - gbar_w)^2 with arbitrary positive weights.
double generalized_q(std::span<const EffectRecord> effects, std::span<const double> weights);

/// Mandel-Paule: root of Q(tau^2) = K - 1 with weights 1/(var_g + tau^2).
Tau2Estimate tau2_mp(std::span<const EffectRecord> effects);

/// Moment estimator for Q with fixed effective-sample-size weights.
Tau2Estimate tau2_ssc(std::span<const EffectRecord> effects);

/// Shift to the expected inverse-variance Q at a given tau^2, on top of the
/// chi-square first moment K - 1. The corrected-moment estimator solves
/// Q(tau^2) = K - 1 + correction(effects, tau^2).
using QMomentCorrection = std::function<double(std::span<const EffectRecord>, double tau2)>;

/// Installs the process-wide correction used by tau2_kdb.
void register_kdb_correction(QMomentCorrection correction);
void clear_kdb_correction();
bool has_kdb_correction();

/// Corrected-moment estimator. Uses the registered correction, or falls back
/// to the Mandel-Paule solution (tagged KDB) with a one-time warning.
Tau2Estimate tau2_kdb(std::span<const EffectRecord> effects);
Tau2Estimate tau2_kdb(std::span<const EffectRecord> effects, const QMomentCorrection& correction);

/// Dispatches on method.
Tau2Estimate estimate_tau2(std::span<const EffectRecord> effects, Tau2Method method);

/// Weights used by pool_delta for this estimate: n_eff for SSC, inverse
/// variance 1/(var_g + tau^2) otherwise.
std::vector<double> method_weights(std::span<const EffectRecord> effects, const Tau2Estimate& tau2);

/// Critical value c_p: the p-quantile of N(0,1) or of t_{df}.
double critical_value(Critical crit, int df, double p);

/// Weighted mean of g under arbitrary fixed weights, with the sandwich
/// standard error sqrt(sum w_i^2 (var_g_i + tau2)) / sum w_i.
PooledDelta weighted_pool(std::span<const EffectRecord> effects, std::span<const double> weights,
                          double tau2);

/// Weighted mean of g with method-appropriate weights and a symmetric
/// (1 - alpha) interval. The t reference uses K - 1 degrees of freedom.
PooledResult pool_delta(std::span<const EffectRecord> effects, const Tau2Estimate& tau2,
                        Critical crit, double alpha);

}  // namespace magmeta
