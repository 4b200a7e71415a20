#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <ostream>
#include <thread>

#include <CLI11.hpp>

#include "magmeta/cli_io.hpp"
#include "magmeta/dists.hpp"
#include "magmeta/magnitude.hpp"

namespace magmeta {
namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int default_threads() {
  if (const char* env = std::getenv("MAGMETA_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1 || v > 1024) {
      throw UsageError("MAGMETA_THREADS must be an integer in [1, 1024]");
    }
    return static_cast<int>(v);
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw DataError("failed writing '" + path + "'");
}

// --- selftest ---------------------------------------------------------------

struct Check {
  const char* name;
  std::function<bool()> run;
};

bool near(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

std::vector<Check> selftest_checks() {
  using namespace dists;
  return {
      {"noncentral F reduces to central F at zero noncentrality",
       [] {
         for (double x : {0.1, 1.0, 3.5, 12.0}) {
           for (int nu2 : {5, 38, 998}) {
             if (!near(noncentral_f_cdf(x, {1, nu2, 0.0}), central_f_cdf(x, 1, nu2), 1e-10)) return false;
           }
         }
         return true;
       }},
      {"noncentral F CDF at (x=5, nu=1/98, lambda2=4)",
       [] { return near(noncentral_f_cdf(5.0, {1, 98, 4.0}), 0.58994862014156607, 1e-9); }},
      {"noncentral chi-square CDF at (x=15, k=5, lambda2=10)",
       [] { return near(noncentral_chi2_cdf(15.0, 5, 10.0), 0.55314055329522670, 1e-9); }},
      {"chi2_5 upper tail at 11.0705 is 0.05",
       [] { return near(chi2_sf(11.0705, 5), 0.05, 1e-4); }},
      {"Steiger interval is [0, 0] at d = 0",
       [] {
         const auto ci = steiger_ci(0.0, 38, 10.0, 0.05);
         return ci.delta2.lower == 0.0 && ci.delta2.upper == 0.0;
       }},
      {"Steiger limits reproduce the tail probabilities",
       [] {
         const double d = 0.8;
         const double n_eff = 12.5;
         const int m = 48;
         const auto ci = steiger_ci(d, m, n_eff, 0.05);
         const double x = n_eff * d * d;
         return near(noncentral_f_cdf(x, {1, m, ci.delta2.upper * n_eff}), 0.025, 1e-8) &&
                near(noncentral_f_cdf(x, {1, m, ci.delta2.lower * n_eff}), 0.975, 1e-8);
       }},
      {"mirror coverage anchors 0.025, 4.43e-05, 2.05e-09",
       [] {
         const double c = normal_quantile(0.975);
         return near(extra_coverage_same_sign(c, 0.05, 0.025), 0.025, 1e-4) &&
                near(extra_coverage_same_sign(1.5 * c, 0.05, 0.025) / 4.43e-05, 1.0, 0.02) &&
                near(extra_coverage_same_sign(2.0 * c, 0.05, 0.025) / 2.05e-09, 1.0, 0.02);
       }},
      {"Lambda by hand: 0.9",
       [] {
         std::vector<EffectRecord> e(2);
         e[0].n_eff = 10.0;
         e[0].d = std::sqrt(0.1);
         e[1].n_eff = 40.0;
         e[1].d = std::sqrt(0.05);
         return near(lambda_statistic(e, 0.1), 0.9, 1e-12);
       }},
      {"common-effect delta2 with all d = 0 is -K / sum n_eff",
       [] {
         std::vector<EffectRecord> e;
         for (int i = 0; i < 5; ++i) e.push_back(derive_effect(StudySummary::from_d(20, 20, 0.0)));
         return near(ce_delta2(e), -0.1, 1e-12);
       }},
      {"squared intervals follow the sign cases",
       [] {
         const auto a = naive_ci_delta2({0.2, 0.6, 0.95, ""});
         const auto b = naive_ci_delta2({-0.6, -0.2, 0.95, ""});
         const auto c = naive_ci_delta2({-0.3, 0.5, 0.95, ""});
         return near(a.lower, 0.04, 1e-15) && near(a.upper, 0.36, 1e-15) && near(b.lower, 0.04, 1e-15) &&
                near(b.upper, 0.36, 1e-15) && c.lower == 0.0 && near(c.upper, 0.25, 1e-15);
       }},
      {"Hedges J(10) exact",
       [] { return near(hedges_j(10), 0.92274560805308710, 1e-14); }},
  };
}

int run_selftest(std::ostream& out) {
  int failed = 0;
  for (const auto& check : selftest_checks()) {
    bool ok = false;
    try {
      ok = check.run();
    } catch (const std::exception&) {
      ok = false;
    }
    out << (ok ? "PASS  " : "FAIL  ") << check.name << '\n';
    if (!ok) ++failed;
  }
  out << (failed == 0 ? "selftest passed\n" : "selftest failed\n");
  return failed == 0 ? kExitOk : kExitData;
}

std::vector<std::string> argv_vector(int argc, const char* const* argv) {
  return {argv, argv + argc};
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Meta-analysis of magnitude effects (squared standardized mean differences)", "magmeta"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run the Monte Carlo scenario grid");
  std::string grid = "default";
  std::string config_path;
  int reps = 0;
  bool full = false;
  std::uint64_t seed = ScenarioConfig{}.seed;
  int threads = 0;
  int sim_b = 0;
  std::vector<std::string> methods;
  std::string sim_out;
  std::string report_path;
  std::string svg_path;
  std::string plot_metric = "coverage_naive";
  double plot_delta = 0.0;
  auto* grid_opt = sim->add_option("--grid", grid, "Built-in grid")
                       ->check(CLI::IsMember({"default", "reduced"}));
  sim->add_option("--config", config_path, "JSON scenario file")->excludes(grid_opt);
  auto* reps_opt = sim->add_option("--reps", reps, "Replications per scenario");
  sim->add_flag("--full", full, "Use 10000 replications per scenario")->excludes(reps_opt);
  auto* seed_opt = sim->add_option("--seed", seed, "Base seed");
  sim->add_option("--threads", threads, "Worker threads (default: MAGMETA_THREADS or all cores)");
  auto* sim_b_opt = sim->add_option("--bootstrap-b", sim_b, "Bootstrap draws of sum F");
  auto* methods_opt = sim->add_option("--methods", methods, "Comma-separated method tags")->delimiter(',');
  sim->add_option("--out", sim_out, "Results CSV")->required();
  sim->add_option("--report", report_path, "Markdown report");
  sim->add_option("--svg", svg_path, "SVG panels of one metric against tau2");
  sim->add_option("--plot-metric", plot_metric, "Metric drawn in the SVG");
  sim->add_option("--plot-delta", plot_delta, "delta value drawn in the SVG");

  // analyze
  auto* ana = app.add_subcommand("analyze", "Analyze a CSV of studies");
  std::string input;
  double ana_alpha = 0.05;
  int ana_b = 10000;
  std::uint64_t ana_seed = ScenarioConfig{}.seed;
  std::string ana_out;
  ana->add_option("--input", input, "Studies CSV")->required();
  ana->add_option("--alpha", ana_alpha, "1 - confidence level");
  ana->add_option("--bootstrap-b", ana_b, "Bootstrap draws of sum F (>= 1000)");
  ana->add_option("--seed", ana_seed, "Seed of the bootstrap stream");
  ana->add_option("--out", ana_out, "Write the report here instead of stdout");

  // ci
  auto* ci = app.add_subcommand("ci", "Single-study interval for delta^2 and |delta|");
  double d = 0.0;
  int nt = 0;
  int nc = 0;
  double ci_alpha = 0.05;
  ci->add_option("--d", d, "Cohen's d")->required();
  ci->add_option("--nt", nt, "Treatment arm size")->required();
  ci->add_option("--nc", nc, "Control arm size")->required();
  ci->add_option("--alpha", ci_alpha, "1 - confidence level");

  auto* self = app.add_subcommand("selftest", "Run the built-in numerical checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    auto check_alpha = [](double a) {
      if (!(a > 0.0 && a < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
    };

    if (self->parsed()) return run_selftest(out);

    if (ci->parsed()) {
      check_alpha(ci_alpha);
      if (nt < 2 || nc < 2) throw UsageError("--nt and --nc must be at least 2");
      if (!std::isfinite(d)) throw UsageError("--d must be finite");
      const auto e = derive_effect(StudySummary::from_d(nt, nc, d));
      const auto s = steiger_ci(d, e.m, e.n_eff, ci_alpha);
      const std::string level = format_double(100.0 * (1.0 - ci_alpha)) + "%";
      out << "d = " << format_double(d) << ", n_t = " << nt << ", n_c = " << nc << ", m = " << e.m
          << ", n_eff = " << format_double(e.n_eff) << "\n";
      out << "delta2_hat = " << format_double(e.delta2_hat) << "\n";
      out << "delta^2 interval (" << level << "): [" << format_double(s.delta2.lower) << ", "
          << format_double(s.delta2.upper) << "]\n";
      out << "|delta| interval (" << level << "): [" << format_double(s.abs_delta.lower) << ", "
          << format_double(s.abs_delta.upper) << "]\n";
      return kExitOk;
    }

    if (ana->parsed()) {
      check_alpha(ana_alpha);
      if (ana_b < 1000) throw UsageError("--bootstrap-b must be at least 1000");
      const auto studies = read_studies_csv(input);
      const std::string report =
          render_analysis(studies, ana_alpha, static_cast<std::size_t>(ana_b), ana_seed);
      if (ana_out.empty()) {
        out << report;
      } else {
        write_text(ana_out, report);
        RunManifest m;
        m.command = "analyze";
        m.input_path = input;
        m.output_paths = {ana_out};
        m.seed = ana_seed;
        m.argv = argv_vector(argc, argv);
        write_manifests(m);
        out << "wrote " << ana_out << "\n";
      }
      return kExitOk;
    }

    // simulate
    if (full) reps = 10000;
    if (*reps_opt && reps < 1) throw UsageError("--reps must be at least 1");
    if (*sim_b_opt && sim_b < 1) throw UsageError("--bootstrap-b must be at least 1");
    if (threads < 0) throw UsageError("--threads must be positive");
    for (const auto& m : methods) {
      const auto& tags = all_method_tags();
      if (std::find(tags.begin(), tags.end(), m) == tags.end()) {
        throw UsageError("unknown method '" + m + "' in --methods");
      }
    }
    if (threads == 0) threads = default_threads();

    auto scenarios = config_path.empty()
                         ? (grid == "reduced" ? reduced_grid() : default_grid())
                         : read_config_json(config_path).scenarios;
    for (auto& c : scenarios) {
      if (*reps_opt || full) c.reps = reps;
      if (*seed_opt) c.seed = seed;
      if (*sim_b_opt) c.bootstrap_b = sim_b;
      if (*methods_opt) c.methods = methods;
    }
    std::vector<ScenarioResult> results;
    results.reserve(scenarios.size());
    long failures = 0;
    for (const auto& c : scenarios) {
      results.push_back(run_scenario(c, threads));
      failures += results.back().failures;
    }
    const auto rows = summarize(results);
    write_results_csv(rows, sim_out);

    RunManifest manifest;
    manifest.command = "simulate";
    manifest.config_path = config_path;
    manifest.output_paths = {sim_out};
    manifest.seed = scenarios.empty() ? seed : scenarios.front().seed;
    manifest.argv = argv_vector(argc, argv);
    if (!report_path.empty()) {
      write_text(report_path, render_report(rows));
      manifest.output_paths.push_back(report_path);
    }
    if (!svg_path.empty()) {
      write_text(svg_path, render_svg(rows, plot_metric, plot_delta));
      manifest.output_paths.push_back(svg_path);
    }
    write_manifests(manifest);
    if (failures > 0) err << "warning: " << failures << " replications failed numerically\n";
    out << "wrote " << rows.size() << " rows for " << scenarios.size() << " scenarios to " << sim_out
        << "\n";
    return kExitOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace magmeta
