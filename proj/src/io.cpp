#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>
#include <string_view>
#include <system_error>

#include <json.hpp>

#include "magmeta/cli_io.hpp"
#include "magmeta/magnitude.hpp"
#include "magmeta/pooling.hpp"

namespace magmeta {
namespace {

using json = nlohmann::json;

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void data_error(std::size_t line, std::string_view column, const std::string& msg) {
  std::string what = "line " + std::to_string(line);
  if (!column.empty()) what += ", column " + std::string(column);
  throw DataError(what + ": " + msg);
}

int parse_int(std::string_view s, std::size_t line, std::string_view column) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    data_error(line, column, "expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

double parse_real(std::string_view s, std::size_t line, std::string_view column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    data_error(line, column, "expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

std::uint64_t parse_u64(std::string_view s, std::size_t line, std::string_view column) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    data_error(line, column, "expected a nonnegative integer, got '" + std::string(s) + "'");
  }
  return v;
}

const std::vector<std::string> kRawHeader{"study_id", "n_t", "n_c", "mean_t", "mean_c", "sd_t", "sd_c"};
const std::vector<std::string> kDHeader{"study_id", "n_t", "n_c", "d"};

bool header_is(const std::vector<std::string_view>& fields, const std::vector<std::string>& want) {
  return std::equal(fields.begin(), fields.end(), want.begin(), want.end());
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

void finish_output(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw DataError("failed writing '" + path + "'");
}

// --- config ---------------------------------------------------------------

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                         const std::string& where) {
  if (!obj.is_object()) throw DataError("config: " + where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw DataError("config: unknown key '" + key + "' in " + where);
    }
  }
}

template <class T>
std::vector<T> list_of(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw DataError("config: " + what + " must be a nonempty array");
  return j.get<std::vector<T>>();
}

struct Defaults {
  std::uint64_t seed = ScenarioConfig{}.seed;
  int reps = ScenarioConfig{}.reps;
  int bootstrap_b = ScenarioConfig{}.bootstrap_b;
  double alpha = ScenarioConfig{}.alpha;
  double f = ScenarioConfig{}.f;
  std::vector<std::string> methods = all_method_tags();
};

void apply_defaults(ScenarioConfig& c, const Defaults& d) {
  c.seed = d.seed;
  c.reps = d.reps;
  c.bootstrap_b = d.bootstrap_b;
  c.alpha = d.alpha;
  c.f = d.f;
  c.methods = d.methods;
}

// --- SVG ------------------------------------------------------------------

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += ch;
    }
  }
  return out;
}

std::string fixed(double x, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string short_num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

// --- analysis -------------------------------------------------------------

std::string interval_text(const IntervalEstimate& ci) {
  return "[" + format_double(ci.lower) + ", " + format_double(ci.upper) + "]";
}

std::vector<int> dfs_of(const std::vector<EffectRecord>& effects) {
  std::vector<int> dfs;
  for (const auto& e : effects) dfs.push_back(e.m);
  return dfs;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<StudySummary> parse_studies_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  bool raw_form = false;
  std::vector<StudySummary> studies;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_commas(line);
    if (!have_header) {
      if (header_is(fields, kRawHeader)) {
        raw_form = true;
      } else if (!header_is(fields, kDHeader)) {
        data_error(line_no, "",
                   "header must be 'study_id,n_t,n_c,mean_t,mean_c,sd_t,sd_c' or 'study_id,n_t,n_c,d'");
      }
      have_header = true;
      continue;
    }
    const auto& header = raw_form ? kRawHeader : kDHeader;
    if (fields.size() != header.size()) {
      data_error(line_no, "",
                 "expected " + std::to_string(header.size()) + " columns, found " +
                     std::to_string(fields.size()));
    }
    if (fields[0].empty()) data_error(line_no, "study_id", "empty study id");
    const int n_t = parse_int(fields[1], line_no, "n_t");
    const int n_c = parse_int(fields[2], line_no, "n_c");
    if (n_t + n_c < 4) {
      data_error(line_no, "n_t", "total sample size " + std::to_string(n_t + n_c) + " is below 4");
    }
    StudySummary s;
    if (raw_form) {
      ArmMoments a;
      a.mean_t = parse_real(fields[3], line_no, "mean_t");
      a.mean_c = parse_real(fields[4], line_no, "mean_c");
      a.sd_t = parse_real(fields[5], line_no, "sd_t");
      a.sd_c = parse_real(fields[6], line_no, "sd_c");
      s = StudySummary::from_arms(n_t, n_c, a, std::string(fields[0]));
    } else {
      s = StudySummary::from_d(n_t, n_c, parse_real(fields[3], line_no, "d"), std::string(fields[0]));
    }
    try {
      s.validate();
    } catch (const std::domain_error& e) {
      data_error(line_no, "", e.what());
    }
    studies.push_back(std::move(s));
  }
  if (studies.empty()) throw DataError("no studies");
  return studies;
}

std::vector<StudySummary> read_studies_csv(const std::string& path) {
  auto in = open_input(path);
  try {
    return parse_studies_csv(in);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_results_csv(const std::vector<SummaryRow>& rows, std::ostream& out) {
  out << kResultsHeader << '\n';
  for (const auto& r : rows) {
    out << r.scenario_id << ',' << r.k << ',' << r.n_pattern << ',' << format_double(r.f) << ','
        << format_double(r.delta) << ',' << format_double(r.tau2) << ',' << r.method << ','
        << r.metric << ',' << format_double(r.value) << ',' << format_double(r.mc_se) << ','
        << r.reps << '\n';
  }
}

void write_results_csv(const std::vector<SummaryRow>& rows, const std::string& path) {
  auto out = open_output(path);
  write_results_csv(rows, out);
  finish_output(out, path);
}

std::vector<SummaryRow> parse_results_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<SummaryRow> rows;
  if (!std::getline(in, line) || trim(line) != kResultsHeader) {
    throw DataError("results: header must be '" + std::string(kResultsHeader) + "'");
  }
  ++line_no;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_commas(line);
    if (f.size() != 11) data_error(line_no, "", "expected 11 columns");
    SummaryRow r;
    r.scenario_id = parse_u64(f[0], line_no, "scenario_id");
    r.k = parse_int(f[1], line_no, "k");
    r.n_pattern = std::string(f[2]);
    r.f = parse_real(f[3], line_no, "f");
    r.delta = parse_real(f[4], line_no, "delta");
    r.tau2 = parse_real(f[5], line_no, "tau2");
    r.method = std::string(f[6]);
    r.metric = std::string(f[7]);
    r.value = parse_real(f[8], line_no, "value");
    r.mc_se = parse_real(f[9], line_no, "mc_se");
    r.reps = parse_int(f[10], line_no, "reps");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<SummaryRow> read_results_csv(const std::string& path) {
  auto in = open_input(path);
  return parse_results_csv(in);
}

SimulationPlan parse_config_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("config: invalid JSON: ") + e.what());
  }
  try {
    reject_unknown_keys(root, {"seed", "reps", "bootstrap_b", "alpha", "f", "methods", "grid", "scenarios"},
                        "the top level");
    Defaults d;
    if (root.contains("seed")) d.seed = root["seed"].get<std::uint64_t>();
    if (root.contains("reps")) d.reps = root["reps"].get<int>();
    if (root.contains("bootstrap_b")) d.bootstrap_b = root["bootstrap_b"].get<int>();
    if (root.contains("alpha")) d.alpha = root["alpha"].get<double>();
    if (root.contains("f")) d.f = root["f"].get<double>();
    if (root.contains("methods")) d.methods = list_of<std::string>(root["methods"], "methods");
    if (!root.contains("grid") && !root.contains("scenarios")) {
      throw DataError("config: needs 'grid' or 'scenarios'");
    }

    auto with_defaults = [&d](ScenarioConfig c) {
      apply_defaults(c, d);
      return c;
    };
    SimulationPlan plan;
    if (root.contains("grid")) {
      const auto& g = root["grid"];
      reject_unknown_keys(g, {"k", "n", "patterns", "delta", "tau2"}, "grid");
      if (!g.contains("k") || !g.contains("delta") || !g.contains("tau2")) {
        throw DataError("config: grid needs 'k', 'delta' and 'tau2'");
      }
      if (!g.contains("n") && !g.contains("patterns")) {
        throw DataError("config: grid needs 'n' or 'patterns'");
      }
      const auto ks = list_of<int>(g["k"], "grid.k");
      const auto deltas = list_of<double>(g["delta"], "grid.delta");
      const auto tau2s = list_of<double>(g["tau2"], "grid.tau2");
      if (g.contains("n")) {
        for (int k : ks) {
          for (int n : list_of<int>(g["n"], "grid.n")) {
            for (double delta : deltas) {
              for (double tau2 : tau2s) plan.scenarios.push_back(with_defaults(equal_size_config(k, n, delta, tau2)));
            }
          }
        }
      }
      if (g.contains("patterns")) {
        for (const auto& p : list_of<std::vector<int>>(g["patterns"], "grid.patterns")) {
          for (int k : ks) {
            for (double delta : deltas) {
              for (double tau2 : tau2s) plan.scenarios.push_back(with_defaults(pattern_config(k, p, delta, tau2)));
            }
          }
        }
      }
    }
    if (root.contains("scenarios")) {
      for (const auto& s : root["scenarios"]) {
        reject_unknown_keys(s, {"k", "n", "sizes", "pattern", "delta", "tau2", "f"}, "a scenario");
        const int forms = int(s.contains("n")) + int(s.contains("sizes")) + int(s.contains("pattern"));
        if (forms != 1) throw DataError("config: a scenario needs exactly one of 'n', 'sizes', 'pattern'");
        const double delta = s.value("delta", 0.0);
        const double tau2 = s.value("tau2", 0.0);
        ScenarioConfig c;
        if (s.contains("sizes")) {
          const auto sizes = list_of<int>(s["sizes"], "sizes");
          c = pattern_config(static_cast<int>(sizes.size()), sizes, delta, tau2);
          if (s.contains("k") && s["k"].get<int>() != c.k) {
            throw DataError("config: scenario k does not match the length of sizes");
          }
        } else {
          if (!s.contains("k")) throw DataError("config: scenario needs 'k'");
          const int k = s["k"].get<int>();
          c = s.contains("n") ? equal_size_config(k, s["n"].get<int>(), delta, tau2)
                              : pattern_config(k, list_of<int>(s["pattern"], "pattern"), delta, tau2);
        }
        c = with_defaults(c);
        if (s.contains("f")) c.f = s["f"].get<double>();
        plan.scenarios.push_back(c);
      }
    }
    for (std::size_t i = 0; i < plan.scenarios.size(); ++i) {
      auto& c = plan.scenarios[i];
      c.index = i;
      c.validate();
    }
    return plan;
  } catch (const json::exception& e) {
    throw DataError(std::string("config: ") + e.what());
  } catch (const std::domain_error& e) {
    throw DataError(std::string("config: ") + e.what());
  }
}

SimulationPlan read_config_json(const std::string& path) {
  auto in = open_input(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_json(ss.str());
}

std::string RunManifest::to_json() const {
  json j;
  j["command"] = command;
  j["config_path"] = config_path;
  j["input_path"] = input_path;
  j["output_paths"] = output_paths;
  j["seed"] = seed;
  j["timestamp"] = timestamp;
  j["tool_version"] = tool_version;
  j["argv"] = argv;
  return j.dump(2) + "\n";
}

void write_manifests(const RunManifest& manifest) {
  RunManifest m = manifest;
  if (m.timestamp.empty()) {
    const std::time_t now = std::time(nullptr);
    std::tm utc{};
    gmtime_r(&now, &utc);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
    m.timestamp = buf;
  }
  const std::string text = m.to_json();
  for (const auto& p : m.output_paths) {
    const std::string path = p + ".manifest.json";
    auto out = open_output(path);
    out << text;
    finish_output(out, path);
  }
}

std::string render_report(const std::vector<SummaryRow>& rows) {
  std::vector<std::string> methods;
  for (const auto& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  std::ostringstream out;
  out << "# Simulation report\n\n";
  if (rows.empty()) out << "No results.\n";
  for (const auto& m : methods) {
    out << "## " << m << "\n\n";
    out << "| scenario | K | n | f | delta | tau2 | metric | value | mc_se | reps |\n";
    out << "|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
      if (r.method != m) continue;
      out << "| " << r.scenario_id << " | " << r.k << " | " << r.n_pattern << " | "
          << format_double(r.f) << " | " << format_double(r.delta) << " | " << format_double(r.tau2)
          << " | " << r.metric << " | " << format_double(r.value) << " | " << format_double(r.mc_se)
          << " | " << r.reps << " |\n";
    }
    out << "\n";
  }
  return out.str();
}

std::string render_svg(const std::vector<SummaryRow>& rows, const std::string& metric, double delta) {
  using Facet = std::pair<std::string, int>;
  std::vector<Facet> facets;
  std::vector<std::string> methods;
  // (facet, method) -> points sorted by tau2
  std::map<std::pair<Facet, std::string>, std::vector<std::pair<double, double>>> series;
  double y_min = INFINITY;
  double y_max = -INFINITY;
  double x_min = INFINITY;
  double x_max = -INFINITY;
  for (const auto& r : rows) {
    if (r.metric != metric || std::fabs(r.delta - delta) > 1e-12 || !std::isfinite(r.value)) continue;
    const Facet facet{r.n_pattern, r.k};
    if (std::find(facets.begin(), facets.end(), facet) == facets.end()) facets.push_back(facet);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    series[{facet, r.method}].emplace_back(r.tau2, r.value);
    y_min = std::min(y_min, r.value);
    y_max = std::max(y_max, r.value);
    x_min = std::min(x_min, r.tau2);
    x_max = std::max(x_max, r.tau2);
  }
  if (facets.empty()) {
    throw DataError("svg: no rows with metric '" + metric + "' at delta = " + format_double(delta));
  }
  if (y_max - y_min < 1e-12) {
    y_min -= 0.5;
    y_max += 0.5;
  }
  if (x_max - x_min < 1e-12) {
    x_min -= 0.5;
    x_max += 0.5;
  }

  constexpr double kPanelW = 260.0;
  constexpr double kPanelH = 200.0;
  constexpr double kMargin = 36.0;
  constexpr double kLegendH = 24.0;
  const int cols = std::min<int>(4, static_cast<int>(facets.size()));
  const int rows_n = (static_cast<int>(facets.size()) + cols - 1) / cols;
  const double width = cols * kPanelW;
  const double height = kLegendH + 24.0 + rows_n * kPanelH;
  static const char* palette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a",
                                  "#66a61e", "#e6ab02", "#a6761d", "#666666"};

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width) << "\" height=\""
      << fixed(height) << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  svg << "<text x=\"8\" y=\"16\" font-size=\"13\">" << xml_escape(metric) << " vs tau2 (delta = "
      << short_num(delta) << ")</text>\n";
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const double lx = 8.0 + 110.0 * static_cast<double>(m);
    svg << "<line x1=\"" << fixed(lx) << "\" y1=\"32\" x2=\"" << fixed(lx + 16) << "\" y2=\"32\" stroke=\""
        << palette[m % 8] << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << fixed(lx + 20) << "\" y=\"35\">" << xml_escape(methods[m]) << "</text>\n";
  }
  for (std::size_t fi = 0; fi < facets.size(); ++fi) {
    const double ox = static_cast<double>(fi % cols) * kPanelW;
    const double oy = kLegendH + 24.0 + static_cast<double>(fi / cols) * kPanelH;
    const double px0 = ox + kMargin;
    const double px1 = ox + kPanelW - 10.0;
    const double py0 = oy + kPanelH - kMargin + 10.0;
    const double py1 = oy + 18.0;
    auto sx = [&](double x) { return px0 + (x - x_min) / (x_max - x_min) * (px1 - px0); };
    auto sy = [&](double y) { return py0 - (y - y_min) / (y_max - y_min) * (py0 - py1); };
    svg << "<g>\n";
    svg << "<text x=\"" << fixed(ox + kMargin) << "\" y=\"" << fixed(oy + 12) << "\">n = "
        << xml_escape(facets[fi].first) << ", K = " << facets[fi].second << "</text>\n";
    svg << "<rect x=\"" << fixed(px0) << "\" y=\"" << fixed(py1) << "\" width=\"" << fixed(px1 - px0)
        << "\" height=\"" << fixed(py0 - py1) << "\" fill=\"none\" stroke=\"#999999\"/>\n";
    svg << "<text x=\"" << fixed(px0) << "\" y=\"" << fixed(py0 + 12) << "\">" << short_num(x_min)
        << "</text>\n";
    svg << "<text x=\"" << fixed(px1) << "\" y=\"" << fixed(py0 + 12) << "\" text-anchor=\"end\">"
        << short_num(x_max) << "</text>\n";
    svg << "<text x=\"" << fixed(px0 - 2) << "\" y=\"" << fixed(py0) << "\" text-anchor=\"end\">"
        << short_num(y_min) << "</text>\n";
    svg << "<text x=\"" << fixed(px0 - 2) << "\" y=\"" << fixed(py1 + 8) << "\" text-anchor=\"end\">"
        << short_num(y_max) << "</text>\n";
    for (std::size_t m = 0; m < methods.size(); ++m) {
      auto it = series.find({facets[fi], methods[m]});
      if (it == series.end()) continue;
      auto pts = it->second;
      std::sort(pts.begin(), pts.end());
      svg << "<polyline fill=\"none\" stroke=\"" << palette[m % 8]
          << "\" stroke-width=\"1.5\" data-method=\"" << xml_escape(methods[m]) << "\" points=\"";
      for (std::size_t p = 0; p < pts.size(); ++p) {
        if (p > 0) svg << ' ';
        svg << fixed(sx(pts[p].first)) << ',' << fixed(sy(pts[p].second));
      }
      svg << "\"/>\n";
    }
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string render_analysis(const std::vector<StudySummary>& studies, double alpha,
                            std::size_t bootstrap_b, std::uint64_t seed) {
  std::vector<EffectRecord> effects;
  for (const auto& s : studies) effects.push_back(derive_effect(s));
  const std::string level = format_double(100.0 * (1.0 - alpha)) + "%";

  std::ostringstream out;
  out << "# Magnitude meta-analysis\n\n";
  out << "K = " << effects.size() << ", alpha = " << format_double(alpha) << ", bootstrap B = "
      << bootstrap_b << ", seed = " << seed << "\n\n";

  out << "## Studies\n\n";
  out << "| study | n_t | n_c | d | g | n_eff | m | delta2_hat | delta2 interval (" << level << ") |\n";
  out << "|---|---|---|---|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < effects.size(); ++i) {
    const auto& e = effects[i];
    const auto ci = steiger_ci(e.d, e.m, e.n_eff, alpha);
    out << "| " << studies[i].id << " | " << studies[i].n_t << " | " << studies[i].n_c << " | "
        << format_double(e.d) << " | " << format_double(e.g) << " | " << format_double(e.n_eff)
        << " | " << e.m << " | " << format_double(e.delta2_hat) << " | " << interval_text(ci.delta2)
        << " |\n";
  }
  out << "\n";

  auto ce_rng = Rng::for_replication(seed, 0, 0);
  const auto ce_null = bootstrap_sum_f(dfs_of(effects), bootstrap_b, ce_rng);
  const auto ce_chi2 = ce_test(effects);
  const auto ce_boot = ce_test(effects, ce_null);
  out << "## Common-effect model\n\n";
  out << "- delta2_hat: " << format_double(ce_delta2(effects)) << "\n";
  out << "- test statistic sum n_eff d^2: " << format_double(ce_chi2.statistic) << "\n";
  out << "- p-value (chi2_K): " << format_double(ce_chi2.p_value) << "\n";
  out << "- p-value (bootstrap_sum_F): " << format_double(ce_boot.p_value) << "\n";
  out << "- chi-square profile interval for delta^2 (" << level
      << "): " << interval_text(ce_profile_ci(effects, alpha)) << "\n\n";

  const auto usable = weighting_subset(effects);
  if (usable.size() < 2) {
    out << "## Random-effects model\n\nNot available: fewer than two studies with m > 4.\n";
    return out.str();
  }
  if (usable.size() != effects.size()) {
    out << "Random-effects sections use the " << usable.size() << " studies with m > 4.\n\n";
  }
  auto rem_rng = Rng::for_replication(seed, 0, 1);
  const auto rem_null = bootstrap_sum_f(dfs_of(usable), bootstrap_b, rem_rng);

  for (auto method : {Tau2Method::MP, Tau2Method::KDB, Tau2Method::SSC}) {
    const auto tau2 = estimate_tau2(usable, method);
    const auto point = rem_point_estimate(usable, tau2);
    const auto pooled = pool_delta(usable, tau2, Critical::Normal, alpha);
    const auto chi2 = conditional_test(usable, tau2);
    const auto boot = conditional_test(usable, tau2, rem_null);
    out << "## " << to_string(method) << "\n\n";
    if (method == Tau2Method::KDB && !has_kdb_correction()) {
      out << "No corrected-moment plugin is registered; tau2 is the Mandel-Paule value.\n\n";
    }
    out << "- tau2_hat: " << format_double(tau2.value) << (tau2.truncated ? " (truncated at 0)" : "")
        << "\n";
    out << "- delta_hat: " << format_double(pooled.pooled.estimate) << " (se "
        << format_double(pooled.pooled.std_err) << ")\n";
    out << "- delta2_hat_hat: " << format_double(point.delta2) << "\n";
    out << "- delta2_hat_hat truncated: " << format_double(point.delta2_truncated) << "\n";
    out << "- naive interval, normal (" << level << "): "
        << interval_text(naive_ci_delta2(pooled.interval)) << "\n";
    out << "- corrected interval, normal (" << level << "): "
        << interval_text(corrected_ci_delta2(pooled.pooled, alpha, Critical::Normal).interval) << "\n";
    if (method == Tau2Method::SSC) {
      const auto pooled_t = pool_delta(usable, tau2, Critical::StudentT, alpha);
      out << "- SSC_t naive interval (" << level << "): "
          << interval_text(naive_ci_delta2(pooled_t.interval)) << "\n";
      out << "- SSC_t corrected interval (" << level << "): "
          << interval_text(corrected_ci_delta2(pooled_t.pooled, alpha, Critical::StudentT).interval)
          << "\n";
    }
    out << "- conditional interval (" << level
        << "): " << interval_text(conditional_profile_ci(usable, tau2, alpha)) << "\n";
    out << "- conditional test statistic Lambda: " << format_double(chi2.statistic) << "\n";
    out << "- conditional p-value (chi2_K): " << format_double(chi2.p_value) << "\n";
    out << "- conditional p-value (bootstrap_sum_F): " << format_double(boot.p_value) << "\n\n";
  }
  return out.str();
}

}  // namespace magmeta
