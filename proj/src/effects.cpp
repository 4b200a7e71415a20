#include "magmeta/effects.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "magmeta/dists.hpp"
#include "magmeta/log.hpp"

namespace magmeta {
namespace {

void require_m_above_4(int m, const char* what) {
  if (m <= 4) throw std::domain_error(std::string(what) + ": requires m > 4");
}

void require_positive_n(double n_eff, const char* what) {
  if (!(n_eff > 0.0)) throw std::domain_error(std::string(what) + ": n_eff must be positive");
}

}  // namespace

StudySummary StudySummary::from_arms(int n_t, int n_c, ArmMoments arms, std::string id) {
  StudySummary s;
  s.id = std::move(id);
  s.n_t = n_t;
  s.n_c = n_c;
  s.arms = arms;
  return s;
}

StudySummary StudySummary::from_d(int n_t, int n_c, double d, std::string id) {
  StudySummary s;
  s.id = std::move(id);
  s.n_t = n_t;
  s.n_c = n_c;
  s.d = d;
  return s;
}

void StudySummary::validate() const {
  if (n_t < 2 || n_c < 2) throw std::domain_error("study: each arm needs at least 2 subjects");
  if (arms) {
    if (!(arms->sd_t > 0.0) || !(arms->sd_c > 0.0)) {
      throw std::domain_error("study: standard deviations must be positive");
    }
    if (!std::isfinite(arms->mean_t) || !std::isfinite(arms->mean_c)) {
      throw std::domain_error("study: means must be finite");
    }
  } else if (!std::isfinite(d)) {
    throw std::domain_error("study: d must be finite");
  }
}

double pooled_sd(int n_t, int n_c, double sd_t, double sd_c) {
  const double num = (n_t - 1) * sd_t * sd_t + (n_c - 1) * sd_c * sd_c;
  return std::sqrt(num / (n_t + n_c - 2));
}

double effective_n(int n_t, int n_c) {
  return static_cast<double>(n_t) * n_c / (n_t + n_c);
}

double delta2_unbiased(double d, int m, double n_eff) {
  if (m < 1) throw std::domain_error("delta2_unbiased: m must be >= 1");
  require_positive_n(n_eff, "delta2_unbiased");
  return (m - 2.0) / m * d * d - 1.0 / n_eff;
}

double var_delta2_true(double delta2, int m, double n_eff) {
  require_m_above_4(m, "var_delta2_true");
  require_positive_n(n_eff, "var_delta2_true");
  const double mm1 = m - 1.0;
  return 2.0 / (m - 4.0) *
         (mm1 / (n_eff * n_eff) + 2.0 * mm1 * delta2 / n_eff + delta2 * delta2);
}

double delta4_unbiased(double d, int m, double n_eff) {
  require_m_above_4(m, "delta4_unbiased");
  require_positive_n(n_eff, "delta4_unbiased");
  const double d2 = d * d;
  const double md = m;
  return (md - 2.0) * (md - 4.0) / (md * md) * d2 * d2 - 6.0 / n_eff * (md - 2.0) / md * d2 +
         3.0 / (n_eff * n_eff);
}

double var_delta2_unbiased(double d, int m, double n_eff) {
  require_m_above_4(m, "var_delta2_unbiased");
  require_positive_n(n_eff, "var_delta2_unbiased");
  const double d2 = d * d;
  const double md = m;
  return 2.0 * (md - 2.0) / (md * md) * d2 * d2 + 4.0 * (md - 2.0) / (md * n_eff) * d2 -
         2.0 / (n_eff * n_eff);
}

double var_hedges_g(double g, int m, double n_eff) {
  require_positive_n(n_eff, "var_hedges_g");
  return 1.0 / n_eff + g * g / (2.0 * m);
}

EffectRecord derive_effect(const StudySummary& study) {
  study.validate();
  EffectRecord e;
  e.m = study.n_t + study.n_c - 2;
  e.n_eff = effective_n(study.n_t, study.n_c);
  if (study.arms) {
    const auto& a = *study.arms;
    e.d = (a.mean_t - a.mean_c) / pooled_sd(study.n_t, study.n_c, a.sd_t, a.sd_c);
  } else {
    e.d = study.d;
  }
  e.g = dists::hedges_j(e.m) * e.d;
  e.delta2_hat = delta2_unbiased(e.d, e.m, e.n_eff);
  if (e.m > 4) e.var_delta2_hat = var_delta2_unbiased(e.d, e.m, e.n_eff);
  e.var_g = var_hedges_g(e.g, e.m, e.n_eff);
  return e;
}

std::vector<EffectRecord> weighting_subset(std::span<const EffectRecord> effects) {
  std::vector<EffectRecord> kept;
  kept.reserve(effects.size());
  for (std::size_t i = 0; i < effects.size(); ++i) {
    if (usable_for_weighting(effects[i])) {
      kept.push_back(effects[i]);
    } else {
      warn("study " + std::to_string(i + 1) + " has m = " + std::to_string(effects[i].m) +
           " <= 4; excluded from variance-weighted procedures");
    }
  }
  return kept;
}

SteigerInterval steiger_ci(double d, int m, double n_eff, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("steiger_ci: alpha must lie in (0, 1)");
  if (m < 1) throw std::domain_error("steiger_ci: m must be >= 1");
  require_positive_n(n_eff, "steiger_ci");

  const double x = n_eff * d * d;
  const double cdf0 = x > 0.0 ? dists::central_f_cdf(x, 1, m) : 0.0;
  double lambda_upper = 0.0;
  double lambda_lower = 0.0;
  if (cdf0 >= alpha / 2.0) lambda_upper = dists::solve_ncp(x, 1, m, alpha / 2.0);
  if (cdf0 >= 1.0 - alpha / 2.0) lambda_lower = dists::solve_ncp(x, 1, m, 1.0 - alpha / 2.0);

  SteigerInterval out;
  out.delta2 = {lambda_lower / n_eff, lambda_upper / n_eff, 1.0 - alpha, "steiger_F"};
  out.abs_delta = {std::sqrt(out.delta2.lower), std::sqrt(out.delta2.upper), 1.0 - alpha,
                   "steiger_F"};
  return out;
}

}  // namespace magmeta
