#include "magmeta/magnitude.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "magmeta/dists.hpp"

namespace magmeta {
namespace {

void require_nonempty(std::span<const EffectRecord> effects, const char* what) {
  if (effects.empty()) throw std::domain_error(std::string(what) + ": needs at least one study");
}

void require_alpha(double alpha, const char* what) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::domain_error(std::string(what) + ": alpha must lie in (0, 1)");
  }
}

// Quantile and CDF of the symmetric reference G: normal for df <= 0.
double g_quantile(double p, int df) {
  return df <= 0 ? dists::normal_quantile(p) : dists::student_t_quantile(p, df);
}

double g_cdf(double x, int df) {
  return df <= 0 ? dists::normal_cdf(x) : dists::student_t_cdf(x, df);
}

// c_{1-p} computed from the lower tail so tiny p keep full precision.
double g_upper(double p, int df) { return -g_quantile(p, df); }

double sum_neff(std::span<const EffectRecord> effects) {
  double s = 0.0;
  for (const auto& e : effects) s += e.n_eff;
  return s;
}

TestResult make_test(double statistic, double p, Reference ref) {
  p = std::clamp(p, 0.0, 1.0);
  return {statistic, p, ref, p < 0.05};
}

// Profile interval on the delta^2 scale for statistic x ~ chi2_K(delta^2 * scale).
IntervalEstimate chi2_profile(double x, int k, double scale, double alpha, const char* method) {
  IntervalEstimate out{0.0, 0.0, 1.0 - alpha, method};
  if (!(x > 0.0)) return out;
  const double cdf0 = dists::chi2_cdf(x, k);
  if (cdf0 >= alpha / 2.0) out.upper = dists::solve_ncp_chi2(x, k, alpha / 2.0) / scale;
  if (cdf0 >= 1.0 - alpha / 2.0) out.lower = dists::solve_ncp_chi2(x, k, 1.0 - alpha / 2.0) / scale;
  return out;
}

}  // namespace

std::string_view to_string(Reference ref) {
  return ref == Reference::Chi2K ? "chi2_K" : "bootstrap_sum_F";
}

Reference parse_reference(std::string_view tag) {
  if (tag == "chi2_K") return Reference::Chi2K;
  if (tag == "bootstrap_sum_F") return Reference::BootstrapSumF;
  throw std::domain_error("unknown reference '" + std::string(tag) +
                          "' (expected chi2_K or bootstrap_sum_F)");
}

SumFDistribution::SumFDistribution(std::vector<double> draws) : draws_(std::move(draws)) {
  std::sort(draws_.begin(), draws_.end());
}

double SumFDistribution::upper_tail_p(double x) const {
  const auto at_least = draws_.end() - std::lower_bound(draws_.begin(), draws_.end(), x);
  return (1.0 + static_cast<double>(at_least)) / (static_cast<double>(draws_.size()) + 1.0);
}

double SumFDistribution::quantile(double p) const {
  if (draws_.empty()) throw std::domain_error("SumFDistribution::quantile: no draws");
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("SumFDistribution::quantile: p outside [0, 1]");
  const double h = p * static_cast<double>(draws_.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, draws_.size() - 1);
  return draws_[lo] + (h - static_cast<double>(lo)) * (draws_[hi] - draws_[lo]);
}

double SumFDistribution::mean() const {
  if (draws_.empty()) throw std::domain_error("SumFDistribution::mean: no draws");
  double s = 0.0;
  for (double x : draws_) s += x;
  return s / static_cast<double>(draws_.size());
}

SumFDistribution bootstrap_sum_f(std::span<const int> dfs, std::size_t b, Rng& rng) {
  if (b < 1) throw std::domain_error("bootstrap_sum_f: b must be >= 1");
  if (dfs.empty()) throw std::domain_error("bootstrap_sum_f: no degrees of freedom");
  std::vector<double> draws(b);
  for (auto& x : draws) {
    double s = 0.0;
    for (int m : dfs) s += dists::sample_f1(m, rng);
    x = s;
  }
  return SumFDistribution(std::move(draws));
}

double ce_delta2(std::span<const EffectRecord> effects) {
  require_nonempty(effects, "ce_delta2");
  double num = 0.0;
  for (const auto& e : effects) num += (e.m - 2.0) / e.m * e.n_eff * e.d * e.d;
  num -= static_cast<double>(effects.size());
  return num / sum_neff(effects);
}

TestResult ce_test(std::span<const EffectRecord> effects) {
  return lambda_test(effects, 0.0, nullptr);
}

TestResult ce_test(std::span<const EffectRecord> effects, const SumFDistribution& null_dist) {
  return lambda_test(effects, 0.0, &null_dist);
}

TestResult ce_test(std::span<const EffectRecord> effects, Reference ref, std::size_t bootstrap_b,
                   Rng& rng) {
  if (ref == Reference::Chi2K) return ce_test(effects);
  if (bootstrap_b < 1000) throw std::domain_error("ce_test: bootstrap_b must be >= 1000");
  std::vector<int> dfs;
  for (const auto& e : effects) dfs.push_back(e.m);
  const auto null_dist = bootstrap_sum_f(dfs, bootstrap_b, rng);
  return ce_test(effects, null_dist);
}

IntervalEstimate ce_profile_ci(std::span<const EffectRecord> effects, double alpha) {
  require_nonempty(effects, "ce_profile_ci");
  require_alpha(alpha, "ce_profile_ci");
  return chi2_profile(lambda_statistic(effects, 0.0), static_cast<int>(effects.size()),
                      sum_neff(effects), alpha, "ce_chi2_profile");
}

MagnitudeEstimate rem_point_estimate(std::span<const EffectRecord> effects,
                                     const Tau2Estimate& tau2) {
  MagnitudeEstimate out;
  out.delta2 = ce_delta2(effects) - tau2.value;
  out.delta2_truncated = std::max(out.delta2, 0.0);
  out.tau2_method = tau2.method;
  return out;
}

IntervalEstimate naive_ci_delta2(const IntervalEstimate& signed_ci) {
  const double l = signed_ci.lower;
  const double u = signed_ci.upper;
  if (!(l <= u)) throw std::domain_error("naive_ci_delta2: lower exceeds upper");
  IntervalEstimate out{0.0, 0.0, signed_ci.level, signed_ci.method + "_naive"};
  if (l >= 0.0) {
    out.lower = l * l;
    out.upper = u * u;
  } else if (u <= 0.0) {
    out.lower = u * u;
    out.upper = l * l;
  } else {
    out.upper = std::max(l * l, u * u);
  }
  return out;
}

double extra_coverage_same_sign(double r, double alpha, double beta, int df) {
  if (!(beta > 0.0 && beta < alpha && alpha < 1.0)) {
    throw std::domain_error("extra_coverage: need 0 < beta < alpha < 1");
  }
  const double c_hi = g_upper(beta, df);
  const double c_lo = g_quantile(alpha - beta, df);
  return g_cdf(c_hi - 2.0 * r, df) - g_cdf(c_lo - 2.0 * r, df);
}

double extra_coverage_straddling(double r, double alpha, double beta, int df) {
  if (!(beta > 0.0 && beta < alpha && alpha < 1.0)) {
    throw std::domain_error("extra_coverage: need 0 < beta < alpha < 1");
  }
  const double c_hi = g_upper(beta, df);
  const double c_lo = g_quantile(alpha - beta, df);
  return std::min(g_cdf(c_lo, df), g_cdf(c_hi - 2.0 * r, df));
}

CorrectedInterval corrected_ci_delta2(const PooledDelta& pooled, double alpha, Critical crit,
                                      bool inflate_same_sign) {
  require_alpha(alpha, "corrected_ci_delta2");
  const double v = pooled.std_err;
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::domain_error("corrected_ci_delta2: standard error must be positive");
  }
  const int k = static_cast<int>(pooled.weights.size());
  const int df = crit == Critical::StudentT ? k - 1 : 0;
  if (crit == Critical::StudentT && df < 1) {
    throw std::domain_error("corrected_ci_delta2: t reference needs at least two studies");
  }
  const double est = pooled.estimate;
  const double r = est / v;
  const std::string tag = pooled.method + "_corrected";

  CorrectedInterval out;
  const double c = g_upper(alpha / 2.0, df);
  const double l = est - c * v;
  const double u = est + c * v;

  if (l < 0.0 && u > 0.0) {
    // c_{1-beta} + c_{alpha-beta} = 2r; the left side falls from +inf to -inf.
    out.straddling = true;
    auto f = [&](double beta) { return g_upper(beta, df) + g_quantile(alpha - beta, df) - 2.0 * r; };
    double lo = 0.0;
    double hi = alpha;
    double beta = 0.5 * alpha;
    for (int it = 0; it < 2000; ++it) {
      beta = 0.5 * (lo + hi);
      const double fb = f(beta);
      if (std::fabs(fb) <= 1e-11) break;
      if (fb > 0.0) {
        lo = beta;
      } else {
        hi = beta;
      }
      if (hi - lo <= 2.0 * std::numeric_limits<double>::epsilon() * hi) break;
    }
    const double lower_signed = est - g_upper(beta, df) * v;
    out.beta = beta;
    out.alpha_used = alpha;
    out.interval = {0.0, lower_signed * lower_signed, 1.0 - alpha, tag};
    return out;
  }

  if (!inflate_same_sign) {
    out.interval = naive_ci_delta2({l, u, 1.0 - alpha, pooled.method});
    out.interval.method = tag;
    out.beta = alpha / 2.0;
    out.alpha_used = alpha;
    return out;
  }

  // Same sign: find alpha' with alpha' - extra(|r|, alpha', alpha'/2) = alpha.
  const double ar = std::fabs(r);
  auto h = [&](double a) { return a - extra_coverage_same_sign(ar, a, a / 2.0, df) - alpha; };
  double lo = alpha;
  double hi = std::min(4.0 * alpha, 0.5 * (1.0 + alpha));
  while (h(hi) < 0.0 && hi < 1.0 - 1e-12) hi = 0.5 * (hi + 1.0);
  double a = alpha;
  if (h(lo) < 0.0) {
    for (int it = 0; it < 200; ++it) {
      a = 0.5 * (lo + hi);
      const double ha = h(a);
      if (std::fabs(ha) <= 1e-13) break;
      if (ha < 0.0) {
        lo = a;
      } else {
        hi = a;
      }
      if (hi - lo <= 2.0 * std::numeric_limits<double>::epsilon() * hi) break;
    }
  }
  const double ca = g_upper(a / 2.0, df);
  const IntervalEstimate signed_ci{est - ca * v, est + ca * v, 1.0 - a, pooled.method};
  out.interval = naive_ci_delta2(signed_ci);
  out.interval.level = 1.0 - alpha;
  out.interval.method = tag;
  out.beta = a / 2.0;
  out.alpha_used = a;
  return out;
}

double lambda_statistic(std::span<const EffectRecord> effects, double tau2) {
  if (!(tau2 >= 0.0)) throw std::domain_error("lambda_statistic: tau2 must be >= 0");
  double s = 0.0;
  for (const auto& e : effects) s += e.n_eff * e.d * e.d / (1.0 + e.n_eff * tau2);
  return s;
}

TestResult lambda_test(std::span<const EffectRecord> effects, double tau2,
                       const SumFDistribution* null_dist) {
  require_nonempty(effects, "lambda_test");
  const double stat = lambda_statistic(effects, tau2);
  if (null_dist == nullptr) {
    const double p = stat > 0.0 ? dists::chi2_sf(stat, static_cast<int>(effects.size())) : 1.0;
    return make_test(stat, p, Reference::Chi2K);
  }
  if (null_dist->size() == 0) throw std::domain_error("lambda_test: empty bootstrap distribution");
  return make_test(stat, null_dist->upper_tail_p(stat), Reference::BootstrapSumF);
}

TestResult conditional_test(std::span<const EffectRecord> effects, const Tau2Estimate& tau2) {
  return lambda_test(effects, tau2.value, nullptr);
}

TestResult conditional_test(std::span<const EffectRecord> effects, const Tau2Estimate& tau2,
                            const SumFDistribution& null_dist) {
  return lambda_test(effects, tau2.value, &null_dist);
}

TestResult conditional_test(std::span<const EffectRecord> effects, const Tau2Estimate& tau2,
                            Reference ref, std::size_t bootstrap_b, Rng& rng) {
  if (ref == Reference::Chi2K) return conditional_test(effects, tau2);
  if (bootstrap_b < 1000) throw std::domain_error("conditional_test: bootstrap_b must be >= 1000");
  std::vector<int> dfs;
  for (const auto& e : effects) dfs.push_back(e.m);
  const auto null_dist = bootstrap_sum_f(dfs, bootstrap_b, rng);
  return conditional_test(effects, tau2, null_dist);
}

IntervalEstimate conditional_profile_ci(std::span<const EffectRecord> effects,
                                        const Tau2Estimate& tau2, double alpha) {
  require_nonempty(effects, "conditional_profile_ci");
  require_alpha(alpha, "conditional_profile_ci");
  double scale = 0.0;
  for (const auto& e : effects) scale += e.n_eff / (1.0 + e.n_eff * tau2.value);
  std::string tag = "conditional_";
  tag += to_string(tau2.method);
  return chi2_profile(lambda_statistic(effects, tau2.value), static_cast<int>(effects.size()),
                      scale, alpha, tag.c_str());
}

}  // namespace magmeta
