#pragma once

// Command-line surface and file formats: study CSV ingestion, simulation
// config files, results CSV, run manifests, markdown reports and SVG panels.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "magmeta/effects.hpp"
#include "magmeta/simulation.hpp"

namespace magmeta {

inline constexpr const char* kToolVersion = "1.0.0";

/// Exit codes of cli_dispatch.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Bad input data or an I/O failure; maps to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Formats with 17 significant digits ("%.17g").
std::string format_double(double x);

/// Reads `study_id,n_t,n_c,mean_t,mean_c,sd_t,sd_c` or `study_id,n_t,n_c,d`.
/// Errors name the 1-based file line and the column.
std::vector<StudySummary> read_studies_csv(const std::string& path);
std::vector<StudySummary> parse_studies_csv(std::istream& in);

inline constexpr const char* kResultsHeader =
    "scenario_id,k,n_pattern,f,delta,tau2,method,metric,value,mc_se,reps";

void write_results_csv(const std::vector<SummaryRow>& rows, const std::string& path);
void write_results_csv(const std::vector<SummaryRow>& rows, std::ostream& out);
std::vector<SummaryRow> read_results_csv(const std::string& path);
std::vector<SummaryRow> parse_results_csv(std::istream& in);

struct SimulationPlan {
  std::vector<ScenarioConfig> scenarios;
};

/// Parses a JSON simulation config. Unknown keys are errors.
SimulationPlan parse_config_json(const std::string& text);
SimulationPlan read_config_json(const std::string& path);

struct RunManifest {
  std::string command;
  std::string config_path;
  std::string input_path;
  std::vector<std::string> output_paths;
  std::uint64_t seed = 0;
  std::string timestamp;
  std::string tool_version = kToolVersion;
  std::vector<std::string> argv;

  std::string to_json() const;
};

/// Writes `<output>.manifest.json` next to every output path.
void write_manifests(const RunManifest& manifest);

/// Markdown tables, one section per method.
std::string render_report(const std::vector<SummaryRow>& rows);

/// Line plots of one metric against tau^2, one panel per (n pattern, K) and
/// one polyline per method. Only rows with the given delta are drawn.
std::string render_svg(const std::vector<SummaryRow>& rows, const std::string& metric,
                       double delta);

/// Full analysis report for a set of studies.
std::string render_analysis(const std::vector<StudySummary>& studies, double alpha,
                            std::size_t bootstrap_b, std::uint64_t seed);

/// Runs the command line. Returns 0 on success, 1 on usage errors and 2 on
/// data or I/O errors.
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace magmeta
