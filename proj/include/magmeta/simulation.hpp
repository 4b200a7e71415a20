#pragma once

// Monte Carlo engine for magnitude-effect meta-analysis scenarios: data
// generation from the random-effects model, per-replication evaluation of
// every enabled estimator, test and interval, and aggregation with MC errors.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "magmeta/effects.hpp"
#include "magmeta/rng.hpp"

namespace magmeta {

/// Method tags accepted in ScenarioConfig::methods.
inline const std::vector<std::string>& all_method_tags() {
  static const std::vector<std::string> tags{"MP", "KDB", "SSC", "CE", "UNCONDITIONAL"};
  return tags;
}

struct ScenarioConfig {
  std::uint64_t index = 0;       ///< position in the grid; selects the random streams
  int k = 5;
  std::vector<int> sizes;        ///< total n per study, length k
  std::vector<int> base_pattern; ///< the pattern sizes repeats; equal to {n} for equal sizes
  double f = 0.5;                ///< control-arm fraction
  double delta = 0.0;
  double tau2 = 0.0;
  int reps = 2000;
  std::uint64_t seed = 20240601;
  std::vector<std::string> methods = all_method_tags();
  int bootstrap_b = 10000;
  double alpha = 0.05;

  bool has_method(const std::string& tag) const;
  /// "100" for equal sizes, "24/32/36/40/168" for a repeated pattern.
  std::string n_pattern() const;
  /// Arm sizes of study i: n_C = floor(f n), n_T = n - n_C.
  std::pair<int, int> arms(int i) const;
  /// Throws std::domain_error on an inconsistent configuration.
  void validate() const;
};

/// Equal-size config with sizes = {n, ..., n}.
ScenarioConfig equal_size_config(int k, int n, double delta, double tau2);
/// Unequal config repeating the pattern k / pattern.size() times.
ScenarioConfig pattern_config(int k, const std::vector<int>& pattern, double delta, double tau2);

/// The full design: 1320 equal-size cells followed by 495 unequal-size cells.
std::vector<ScenarioConfig> default_grid();
/// A small desk-scale subset for smoke runs and determinism checks.
std::vector<ScenarioConfig> reduced_grid();

/// delta_i ~ N(delta, tau2) (exactly delta when tau2 = 0), then
/// sqrt(n_eff) d_i ~ t_m(sqrt(n_eff) delta_i).
std::vector<EffectRecord> generate_meta_sample(const ScenarioConfig& config, Rng& rng);

struct MetricRow {
  std::string method;
  std::string metric;
  double value = 0.0;
  double mc_se = 0.0;
  long reps = 0;  ///< replications contributing to the value
};

struct ScenarioResult {
  ScenarioConfig config;
  std::vector<MetricRow> metrics;
  long failures = 0;
  double elapsed_seconds = 0.0;
};

/// Runs config.reps replications on the given number of worker threads.
/// Replication r draws from Rng::for_replication(seed, index, r), and outcomes
/// are combined in replication order, so results do not depend on threads.
ScenarioResult run_scenario(const ScenarioConfig& config, int threads = 1);

struct SummaryRow {
  std::uint64_t scenario_id = 0;
  int k = 0;
  std::string n_pattern;
  double f = 0.0;
  double delta = 0.0;
  double tau2 = 0.0;
  std::string method;
  std::string metric;
  double value = 0.0;
  double mc_se = 0.0;
  long reps = 0;
};

/// One row per (scenario, method, metric), in scenario then engine order.
std::vector<SummaryRow> summarize(const std::vector<ScenarioResult>& results);

}  // namespace magmeta
