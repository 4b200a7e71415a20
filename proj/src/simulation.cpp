#include "magmeta/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <thread>

#include "magmeta/dists.hpp"
#include "magmeta/magnitude.hpp"
#include "magmeta/pooling.hpp"

namespace magmeta {
namespace {

constexpr std::uint64_t kBootstrapStream = ~std::uint64_t{0};

enum class Kind { Mean, Median, Proportion };

struct MetricSpec {
  std::string method;
  std::string metric;
  Kind kind;
};

// Per-replication values, one per MetricSpec; NaN marks "not evaluated".
using Outcome = std::vector<double>;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<MetricSpec> metric_layout(const ScenarioConfig& c) {
  std::vector<MetricSpec> specs;
  const std::string test_kind = c.delta == 0.0 ? "level_" : "power_";
  for (const char* m : {"MP", "KDB", "SSC"}) {
    if (!c.has_method(m)) continue;
    specs.push_back({m, "bias_tau2", Kind::Mean});
    specs.push_back({m, "bias_delta", Kind::Mean});
    specs.push_back({m, "median_bias_delta", Kind::Median});
    specs.push_back({m, "bias_delta2", Kind::Mean});
    specs.push_back({m, "bias_delta2_trunc", Kind::Mean});
    specs.push_back({m, "coverage_naive", Kind::Proportion});
    specs.push_back({m, "coverage_corrected", Kind::Proportion});
    specs.push_back({m, "coverage_conditional", Kind::Proportion});
    specs.push_back({m, test_kind + "cond_chi2", Kind::Proportion});
    specs.push_back({m, test_kind + "cond_boot", Kind::Proportion});
    if (std::string(m) == "SSC") {
      specs.push_back({"SSC_t", "coverage_naive", Kind::Proportion});
      specs.push_back({"SSC_t", "coverage_corrected", Kind::Proportion});
    }
  }
  if (c.has_method("CE") && c.tau2 == 0.0) {
    specs.push_back({"CE", "bias_delta2", Kind::Mean});
    specs.push_back({"CE", "coverage_profile", Kind::Proportion});
    specs.push_back({"CE", test_kind + "chi2", Kind::Proportion});
    specs.push_back({"CE", test_kind + "boot", Kind::Proportion});
  }
  if (c.has_method("UNCONDITIONAL")) {
    specs.push_back({"UNCONDITIONAL", test_kind + "chi2", Kind::Proportion});
    specs.push_back({"UNCONDITIONAL", test_kind + "boot", Kind::Proportion});
  }
  return specs;
}

Tau2Method parse_tau2_method(const std::string& m) {
  if (m == "MP") return Tau2Method::MP;
  if (m == "KDB") return Tau2Method::KDB;
  return Tau2Method::SSC;
}

double indicator(bool b) { return b ? 1.0 : 0.0; }

Outcome evaluate_replication(const ScenarioConfig& c, const std::vector<MetricSpec>& layout,
                             const SumFDistribution& null_dist, Rng& rng) {
  const auto effects = generate_meta_sample(c, rng);
  const double delta2 = c.delta * c.delta;
  Outcome out;
  out.reserve(layout.size());

  for (const char* name : {"MP", "KDB", "SSC"}) {
    if (!c.has_method(name)) continue;
    const auto tau2 = estimate_tau2(effects, parse_tau2_method(name));
    const auto pooled = pool_delta(effects, tau2, Critical::Normal, c.alpha);
    const auto point = rem_point_estimate(effects, tau2);
    const double err = pooled.pooled.estimate - c.delta;
    out.push_back(tau2.value - c.tau2);
    out.push_back(err);
    out.push_back(err);
    out.push_back(point.delta2 - delta2);
    out.push_back(point.delta2_truncated - delta2);
    out.push_back(indicator(naive_ci_delta2(pooled.interval).contains(delta2)));
    // Coverage of corrected intervals applies the straddling correction only.
    out.push_back(indicator(
        corrected_ci_delta2(pooled.pooled, c.alpha, Critical::Normal, false).interval.contains(delta2)));
    out.push_back(indicator(conditional_profile_ci(effects, tau2, c.alpha).contains(delta2)));
    out.push_back(indicator(conditional_test(effects, tau2).p_value < c.alpha));
    out.push_back(indicator(conditional_test(effects, tau2, null_dist).p_value < c.alpha));
    if (std::string(name) == "SSC") {
      const auto pooled_t = pool_delta(effects, tau2, Critical::StudentT, c.alpha);
      out.push_back(indicator(naive_ci_delta2(pooled_t.interval).contains(delta2)));
      out.push_back(indicator(corrected_ci_delta2(pooled_t.pooled, c.alpha, Critical::StudentT, false)
                                  .interval.contains(delta2)));
    }
  }
  if (c.has_method("CE") && c.tau2 == 0.0) {
    out.push_back(ce_delta2(effects) - delta2);
    out.push_back(indicator(ce_profile_ci(effects, c.alpha).contains(delta2)));
    out.push_back(indicator(ce_test(effects).p_value < c.alpha));
    out.push_back(indicator(ce_test(effects, null_dist).p_value < c.alpha));
  }
  if (c.has_method("UNCONDITIONAL")) {
    out.push_back(indicator(lambda_test(effects, c.tau2, nullptr).p_value < c.alpha));
    out.push_back(indicator(lambda_test(effects, c.tau2, &null_dist).p_value < c.alpha));
  }
  if (out.size() != layout.size()) throw std::logic_error("metric layout mismatch");
  return out;
}

MetricRow aggregate(const MetricSpec& spec, std::vector<double>& values) {
  MetricRow row{spec.method, spec.metric, kNaN, kNaN, static_cast<long>(values.size())};
  const auto n = static_cast<double>(values.size());
  if (values.empty()) return row;
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;

  switch (spec.kind) {
    case Kind::Mean:
      row.value = mean;
      row.mc_se = sd / std::sqrt(n);
      break;
    case Kind::Proportion:
      row.value = mean;
      row.mc_se = std::sqrt(mean * (1.0 - mean) / n);
      break;
    case Kind::Median: {
      std::sort(values.begin(), values.end());
      const std::size_t h = values.size() / 2;
      row.value = values.size() % 2 == 1 ? values[h] : 0.5 * (values[h - 1] + values[h]);
      // Large-sample SE of the median under approximate normality.
      row.mc_se = std::sqrt(std::numbers::pi / 2.0) * sd / std::sqrt(n);
      break;
    }
  }
  return row;
}

std::vector<int> table_n_values() { return {40, 100, 250, 500}; }
std::vector<double> table_deltas() { return {0.0, 0.2, 0.5, 1.0, 2.0}; }
std::vector<double> table_tau2s() {
  std::vector<double> t;
  for (int i = 0; i <= 10; ++i) t.push_back(i / 10.0);
  return t;
}

}  // namespace

bool ScenarioConfig::has_method(const std::string& tag) const {
  return std::find(methods.begin(), methods.end(), tag) != methods.end();
}

std::string ScenarioConfig::n_pattern() const {
  std::string s;
  for (std::size_t i = 0; i < base_pattern.size(); ++i) {
    if (i > 0) s += '/';
    s += std::to_string(base_pattern[i]);
  }
  return s;
}

std::pair<int, int> ScenarioConfig::arms(int i) const {
  const int n = sizes.at(static_cast<std::size_t>(i));
  const int n_c = static_cast<int>(std::floor(f * n + 1e-9));
  return {n - n_c, n_c};
}

void ScenarioConfig::validate() const {
  if (k < 1) throw std::domain_error("scenario: k must be >= 1");
  if (static_cast<int>(sizes.size()) != k) throw std::domain_error("scenario: sizes must have length k");
  if (!(f > 0.0 && f < 1.0)) throw std::domain_error("scenario: f must lie in (0, 1)");
  if (!std::isfinite(delta)) throw std::domain_error("scenario: delta must be finite");
  if (!(tau2 >= 0.0) || !std::isfinite(tau2)) throw std::domain_error("scenario: tau2 must be >= 0");
  if (reps < 1) throw std::domain_error("scenario: reps must be >= 1");
  if (bootstrap_b < 1) throw std::domain_error("scenario: bootstrap_b must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("scenario: alpha must lie in (0, 1)");
  if (methods.empty()) throw std::domain_error("scenario: no methods enabled");
  if (k < 2 && (has_method("MP") || has_method("KDB") || has_method("SSC"))) {
    throw std::domain_error("scenario: tau^2 methods need k >= 2");
  }
  for (const auto& m : methods) {
    const auto& tags = all_method_tags();
    if (std::find(tags.begin(), tags.end(), m) == tags.end()) {
      throw std::domain_error("scenario: unknown method '" + m + "'");
    }
  }
  for (int i = 0; i < k; ++i) {
    const auto [n_t, n_c] = arms(i);
    if (n_t < 2 || n_c < 2 || n_t + n_c - 2 <= 4) {
      throw std::domain_error("scenario: study " + std::to_string(i + 1) +
                              " is too small (each arm needs 2 subjects and n - 2 > 4)");
    }
  }
}

ScenarioConfig equal_size_config(int k, int n, double delta, double tau2) {
  ScenarioConfig c;
  c.k = k;
  c.sizes.assign(static_cast<std::size_t>(std::max(k, 0)), n);
  c.base_pattern = {n};
  c.delta = delta;
  c.tau2 = tau2;
  return c;
}

ScenarioConfig pattern_config(int k, const std::vector<int>& pattern, double delta, double tau2) {
  if (pattern.empty() || k % static_cast<int>(pattern.size()) != 0) {
    throw std::domain_error("pattern_config: k must be a multiple of the pattern length");
  }
  ScenarioConfig c;
  c.k = k;
  for (int r = 0; r < k / static_cast<int>(pattern.size()); ++r) {
    c.sizes.insert(c.sizes.end(), pattern.begin(), pattern.end());
  }
  c.base_pattern = pattern;
  c.delta = delta;
  c.tau2 = tau2;
  return c;
}

std::vector<ScenarioConfig> default_grid() {
  std::vector<ScenarioConfig> grid;
  for (int k : {5, 10, 20, 30, 50, 100}) {
    for (int n : table_n_values()) {
      for (double delta : table_deltas()) {
        for (double tau2 : table_tau2s()) grid.push_back(equal_size_config(k, n, delta, tau2));
      }
    }
  }
  const std::vector<std::vector<int>> patterns{
      {24, 32, 36, 40, 168}, {64, 72, 76, 80, 208}, {124, 132, 136, 140, 268}};
  for (const auto& pattern : patterns) {
    for (int k : {5, 10, 30}) {
      for (double delta : table_deltas()) {
        for (double tau2 : table_tau2s()) grid.push_back(pattern_config(k, pattern, delta, tau2));
      }
    }
  }
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i].index = i;
  return grid;
}

std::vector<ScenarioConfig> reduced_grid() {
  std::vector<ScenarioConfig> grid;
  for (int k : {5, 10}) {
    for (int n : {40, 100}) {
      for (double delta : {0.0, 0.5}) {
        for (double tau2 : {0.0, 0.4}) grid.push_back(equal_size_config(k, n, delta, tau2));
      }
    }
  }
  for (int k : {5, 10}) {
    for (double delta : {0.0, 0.5}) {
      grid.push_back(pattern_config(k, {24, 32, 36, 40, 168}, delta, 0.4));
    }
  }
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i].index = i;
  return grid;
}

std::vector<EffectRecord> generate_meta_sample(const ScenarioConfig& config, Rng& rng) {
  std::vector<EffectRecord> effects;
  effects.reserve(static_cast<std::size_t>(config.k));
  const double tau = std::sqrt(config.tau2);
  for (int i = 0; i < config.k; ++i) {
    const auto [n_t, n_c] = config.arms(i);
    const double n_eff = effective_n(n_t, n_c);
    const int m = n_t + n_c - 2;
    const double delta_i = config.tau2 > 0.0 ? dists::sample_normal(rng, config.delta, tau) : config.delta;
    const double d =
        dists::sample_scaled_noncentral_t(m, std::sqrt(n_eff) * delta_i, 1.0 / std::sqrt(n_eff), rng);
    effects.push_back(derive_effect(StudySummary::from_d(n_t, n_c, d)));
  }
  return effects;
}

ScenarioResult run_scenario(const ScenarioConfig& config, int threads) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto layout = metric_layout(config);

  std::vector<int> dfs;
  for (int i = 0; i < config.k; ++i) {
    const auto [n_t, n_c] = config.arms(i);
    dfs.push_back(n_t + n_c - 2);
  }
  auto boot_rng = Rng::for_replication(config.seed, config.index, kBootstrapStream);
  const auto null_dist =
      bootstrap_sum_f(dfs, static_cast<std::size_t>(config.bootstrap_b), boot_rng);

  const auto reps = static_cast<std::size_t>(config.reps);
  std::vector<Outcome> outcomes(reps);
  std::vector<char> failed(reps, 0);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < reps; r = next++) {
      auto rng = Rng::for_replication(config.seed, config.index, r);
      try {
        outcomes[r] = evaluate_replication(config, layout, null_dist, rng);
      } catch (const std::exception&) {
        failed[r] = 1;
      }
    }
  };
  const int n_workers = std::clamp(threads, 1, static_cast<int>(std::max<std::size_t>(reps, 1)));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  }

  ScenarioResult result;
  result.config = config;
  for (std::size_t j = 0; j < layout.size(); ++j) {
    std::vector<double> values;
    values.reserve(reps);
    for (std::size_t r = 0; r < reps; ++r) {
      if (!failed[r] && !std::isnan(outcomes[r][j])) values.push_back(outcomes[r][j]);
    }
    result.metrics.push_back(aggregate(layout[j], values));
  }
  for (char f : failed) result.failures += f;
  result.metrics.push_back({"ALL", "failures", static_cast<double>(result.failures), 0.0,
                            static_cast<long>(config.reps)});
  result.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<SummaryRow> summarize(const std::vector<ScenarioResult>& results) {
  std::vector<SummaryRow> rows;
  for (const auto& res : results) {
    const auto& c = res.config;
    for (const auto& m : res.metrics) {
      rows.push_back({c.index, c.k, c.n_pattern(), c.f, c.delta, c.tau2, m.method, m.metric,
                      m.value, m.mc_se, m.reps});
    }
  }
  return rows;
}

}  // namespace magmeta
