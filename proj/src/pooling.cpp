#include "magmeta/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <utility>

#include "magmeta/dists.hpp"
#include "magmeta/log.hpp"

namespace magmeta {
namespace {

void require_k(std::span<const EffectRecord> effects, std::size_t min_k, const char* what) {
  if (effects.size() < min_k) {
    throw std::domain_error(std::string(what) + ": needs at least " + std::to_string(min_k) +
                            " studies");
  }
}

std::vector<double> inverse_variance_weights(std::span<const EffectRecord> effects, double tau2) {
  std::vector<double> w(effects.size());
  for (std::size_t i = 0; i < effects.size(); ++i) w[i] = 1.0 / (effects[i].var_g + tau2);
  return w;
}

double q_inverse_variance(std::span<const EffectRecord> effects, double tau2) {
  double sw = 0.0;
  double swy = 0.0;
  for (const auto& e : effects) {
    const double w = 1.0 / (e.var_g + tau2);
    sw += w;
    swy += w * e.g;
  }
  const double mean = swy / sw;
  double q = 0.0;
  for (const auto& e : effects) {
    const double r = e.g - mean;
    q += r * r / (e.var_g + tau2);
  }
  return q;
}

// Root of Q(tau^2) = expected(tau^2) by bisection, with a geometrically grown
// upper bracket. Returns 0 (truncated) when Q(0) is already below target.
template <class Expected>
Tau2Estimate solve_q_moment(std::span<const EffectRecord> effects, Expected expected,
                            Tau2Method method) {
  constexpr double kQTol = 1e-10;
  auto excess = [&](double tau2) { return q_inverse_variance(effects, tau2) - expected(tau2); };

  const double f0 = excess(0.0);
  if (f0 < 0.0) return {0.0, method, true};
  if (f0 == 0.0) return {0.0, method, false};

  double mean = 0.0;
  for (const auto& e : effects) mean += e.g;
  mean /= static_cast<double>(effects.size());
  double hi = 0.0;
  for (const auto& e : effects) hi = std::max(hi, (e.g - mean) * (e.g - mean));
  hi = std::max(hi, 1e-8);

  double lo = 0.0;
  for (int doublings = 0; excess(hi) > 0.0; ++doublings) {
    if (doublings > 200) throw std::runtime_error("tau2: could not bracket the moment equation");
    lo = hi;
    hi *= 2.0;
  }
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 300; ++it) {
    mid = 0.5 * (lo + hi);
    const double f = excess(mid);
    if (std::fabs(f) <= kQTol) break;
    if (f > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
  }
  return {mid, method, false};
}

struct KdbRegistry {
  std::mutex mutex;
  QMomentCorrection correction;
};

KdbRegistry& kdb_registry() {
  static KdbRegistry r;
  return r;
}

}  // namespace

std::string_view to_string(Tau2Method method) {
  switch (method) {
    case Tau2Method::MP:
      return "MP";
    case Tau2Method::KDB:
      return "KDB";
    case Tau2Method::SSC:
      return "SSC";
  }
  return "?";
}

double generalized_q(std::span<const EffectRecord> effects, std::span<const double> weights) {
  require_k(effects, 2, "generalized_q");
  if (weights.size() != effects.size()) {
    throw std::domain_error("generalized_q: weights and effects differ in length");
  }
  double sw = 0.0;
  double swy = 0.0;
  for (std::size_t i = 0; i < effects.size(); ++i) {
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw std::domain_error("generalized_q: weights must be positive and finite");
    }
    sw += weights[i];
    swy += weights[i] * effects[i].g;
  }
  const double mean = swy / sw;
  double q = 0.0;
  for (std::size_t i = 0; i < effects.size(); ++i) {
    const double r = effects[i].g - mean;
    q += weights[i] * r * r;
  }
  return q;
}

Tau2Estimate tau2_mp(std::span<const EffectRecord> effects) {
  require_k(effects, 2, "tau2_mp");
  const double target = static_cast<double>(effects.size()) - 1.0;
  return solve_q_moment(effects, [target](double) { return target; }, Tau2Method::MP);
}

Tau2Estimate tau2_ssc(std::span<const EffectRecord> effects) {
  require_k(effects, 2, "tau2_ssc");
  std::vector<double> w(effects.size());
  double sw = 0.0;
  double sw2 = 0.0;
  double swv = 0.0;
  double sw2v = 0.0;
  for (std::size_t i = 0; i < effects.size(); ++i) {
    w[i] = effects[i].n_eff;
    sw += w[i];
    sw2 += w[i] * w[i];
    swv += w[i] * effects[i].var_g;
    sw2v += w[i] * w[i] * effects[i].var_g;
  }
  const double q = generalized_q(effects, w);
  const double numerator = q - (swv - sw2v / sw);
  const double denominator = sw - sw2 / sw;
  const double raw = numerator / denominator;
  if (raw < 0.0) return {0.0, Tau2Method::SSC, true};
  return {raw, Tau2Method::SSC, false};
}

void register_kdb_correction(QMomentCorrection correction) {
  auto& r = kdb_registry();
  std::lock_guard lock(r.mutex);
  r.correction = std::move(correction);
}

void clear_kdb_correction() { register_kdb_correction({}); }

bool has_kdb_correction() {
  auto& r = kdb_registry();
  std::lock_guard lock(r.mutex);
  return static_cast<bool>(r.correction);
}

Tau2Estimate tau2_kdb(std::span<const EffectRecord> effects, const QMomentCorrection& correction) {
  require_k(effects, 2, "tau2_kdb");
  const double base = static_cast<double>(effects.size()) - 1.0;
  return solve_q_moment(
      effects, [&](double tau2) { return base + correction(effects, tau2); }, Tau2Method::KDB);
}

Tau2Estimate tau2_kdb(std::span<const EffectRecord> effects) {
  require_k(effects, 2, "tau2_kdb");
  QMomentCorrection correction;
  {
    auto& r = kdb_registry();
    std::lock_guard lock(r.mutex);
    correction = r.correction;
  }
  if (correction) return tau2_kdb(effects, correction);

  static std::once_flag notice;
  std::call_once(notice, [] {
    warn("KDB: no corrected-moment plugin registered; using the Mandel-Paule estimate");
  });
  Tau2Estimate mp = tau2_mp(effects);
  mp.method = Tau2Method::KDB;
  return mp;
}

Tau2Estimate estimate_tau2(std::span<const EffectRecord> effects, Tau2Method method) {
  switch (method) {
    case Tau2Method::MP:
      return tau2_mp(effects);
    case Tau2Method::KDB:
      return tau2_kdb(effects);
    case Tau2Method::SSC:
      return tau2_ssc(effects);
  }
  throw std::domain_error("estimate_tau2: unknown method");
}

std::vector<double> method_weights(std::span<const EffectRecord> effects, const Tau2Estimate& tau2) {
  if (tau2.method == Tau2Method::SSC) {
    std::vector<double> w(effects.size());
    for (std::size_t i = 0; i < effects.size(); ++i) w[i] = effects[i].n_eff;
    return w;
  }
  return inverse_variance_weights(effects, tau2.value);
}

double critical_value(Critical crit, int df, double p) {
  return crit == Critical::Normal ? dists::normal_quantile(p) : dists::student_t_quantile(p, df);
}

PooledDelta weighted_pool(std::span<const EffectRecord> effects, std::span<const double> weights,
                          double tau2) {
  require_k(effects, 1, "weighted_pool");
  if (weights.size() != effects.size()) {
    throw std::domain_error("weighted_pool: weights and effects differ in length");
  }
  PooledDelta p;
  p.weights.assign(weights.begin(), weights.end());
  double sw = 0.0;
  double swy = 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < effects.size(); ++i) {
    const double w = weights[i];
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw std::domain_error("weighted_pool: weights must be positive and finite");
    }
    sw += w;
    swy += w * effects[i].g;
    s += w * w * (effects[i].var_g + tau2);
  }
  p.estimate = swy / sw;
  p.std_err = std::sqrt(s) / sw;
  p.method = "fixed";
  return p;
}

PooledResult pool_delta(std::span<const EffectRecord> effects, const Tau2Estimate& tau2,
                        Critical crit, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("pool_delta: alpha must lie in (0, 1)");
  require_k(effects, 1, "pool_delta");

  PooledResult out;
  auto& p = out.pooled;
  p.weights = method_weights(effects, tau2);
  double sw = 0.0;
  double swy = 0.0;
  for (std::size_t i = 0; i < effects.size(); ++i) {
    const double w = p.weights[i];
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw std::domain_error("pool_delta: weights must be positive and finite");
    }
    sw += w;
    swy += w * effects[i].g;
  }
  p.estimate = swy / sw;
  if (tau2.method == Tau2Method::SSC) {
    double s = 0.0;
    for (std::size_t i = 0; i < effects.size(); ++i) {
      s += p.weights[i] * p.weights[i] * (effects[i].var_g + tau2.value);
    }
    p.std_err = std::sqrt(s) / sw;
  } else {
    p.std_err = std::sqrt(1.0 / sw);
  }
  p.method = std::string(to_string(tau2.method)) + (crit == Critical::StudentT ? "_t" : "");

  const int df = static_cast<int>(effects.size()) - 1;
  const double c = critical_value(crit, df, 1.0 - alpha / 2.0);
  out.interval = {p.estimate - c * p.std_err, p.estimate + c * p.std_err, 1.0 - alpha, p.method};
  return out;
}

}  // namespace magmeta
