#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "magmeta/cli_io.hpp"

using namespace magmeta;
namespace fs = std::filesystem;

namespace {

std::vector<StudySummary> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_studies_csv(in);
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "magmeta");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "magmeta_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

SummaryRow row(int k, const std::string& pattern, double tau2, const std::string& method, double value) {
  SummaryRow r;
  r.scenario_id = 1;
  r.k = k;
  r.n_pattern = pattern;
  r.f = 0.5;
  r.delta = 0.0;
  r.tau2 = tau2;
  r.method = method;
  r.metric = "coverage_naive";
  r.value = value;
  r.mc_se = 0.01;
  r.reps = 100;
  return r;
}

}  // namespace

TEST_SUITE("cli_io") {
  TEST_CASE("study CSV in both forms") {
    const auto raw = parse("study_id,n_t,n_c,mean_t,mean_c,sd_t,sd_c\n a , 20, 20, 5, 4, 2, 2\n\n");
    REQUIRE(raw.size() == 1);
    CHECK(raw[0].id == "a");
    REQUIRE(raw[0].arms.has_value());
    CHECK(raw[0].arms->mean_t == 5.0);

    const auto d = parse("study_id,n_t,n_c,d\ns1,50,50,0.5\ns2,10,12,-0.2\n");
    REQUIRE(d.size() == 2);
    const auto e = derive_effect(d[0]);
    CHECK(e.n_eff == 25.0);
    CHECK(e.m == 98);
    CHECK(e.d == 0.5);
    CHECK(d[1].d == -0.2);
  }

  TEST_CASE("study CSV errors") {
    CHECK(error_of("study_id,n_t,n_c,d\n") == "no studies");
    CHECK(error_of("") == "no studies");
    CHECK(error_of("id,n_t,n_c,d\ns,5,5,0.1\n").find("header") != std::string::npos);
    const auto bad_n = error_of("study_id,n_t,n_c,d\ns1,50,50,0.5\ns2,5x,5,0.1\n");
    CHECK(bad_n.find("line 3") != std::string::npos);
    CHECK(bad_n.find("column n_t") != std::string::npos);
    const auto bad_d = error_of("study_id,n_t,n_c,d\ns1,50,50,abc\n");
    CHECK(bad_d.find("column d") != std::string::npos);
    CHECK(error_of("study_id,n_t,n_c,d\ns1,1,2,0.5\n").find("below 4") != std::string::npos);
    // A d-form row under a raw header has the wrong column count.
    CHECK(error_of("study_id,n_t,n_c,mean_t,mean_c,sd_t,sd_c\ns1,50,50,0.5\n").find("columns") !=
          std::string::npos);
    CHECK_FALSE(error_of("study_id,n_t,n_c,mean_t,mean_c,sd_t,sd_c\ns1,5,5,1,1,0,1\n").empty());
    CHECK_THROWS_AS(read_studies_csv("/nonexistent/studies.csv"), DataError);
  }

  TEST_CASE("results CSV round trip") {
    std::vector<SummaryRow> rows{row(5, "24/32/36/40/168", 0.4, "SSC_t", 0.1 + 0.2),
                                 row(10, "100", 0.0, "MP", 1.0 / 3.0)};
    rows[1].mc_se = 1e-300;
    std::stringstream ss;
    write_results_csv(rows, ss);
    const std::string text = ss.str();
    CHECK(text.substr(0, text.find('\n')) == kResultsHeader);
    const auto back = parse_results_csv(ss);
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(back[i].value == rows[i].value);
      CHECK(back[i].mc_se == rows[i].mc_se);
      CHECK(back[i].n_pattern == rows[i].n_pattern);
      CHECK(back[i].method == rows[i].method);
      CHECK(back[i].tau2 == rows[i].tau2);
      CHECK(back[i].reps == rows[i].reps);
    }
    std::istringstream bad("scenario_id,k\n");
    CHECK_THROWS_AS(parse_results_csv(bad), DataError);
    CHECK(format_double(0.1) == "0.10000000000000001");
  }

  TEST_CASE("config files") {
    const auto plan = parse_config_json(R"({
      "seed": 7, "reps": 50, "methods": ["MP", "CE"], "f": 0.25,
      "grid": {"k": [5, 10], "n": [40], "delta": [0, 0.5], "tau2": [0.1]},
      "scenarios": [{"k": 5, "pattern": [24, 32, 36, 40, 168], "delta": 0.2, "tau2": 0.0, "f": 0.5}]
    })");
    REQUIRE(plan.scenarios.size() == 5);
    for (std::size_t i = 0; i < plan.scenarios.size(); ++i) CHECK(plan.scenarios[i].index == i);
    CHECK(plan.scenarios[0].seed == 7);
    CHECK(plan.scenarios[0].reps == 50);
    CHECK(plan.scenarios[0].f == 0.25);
    CHECK(plan.scenarios[0].methods == std::vector<std::string>{"MP", "CE"});
    CHECK(plan.scenarios[4].f == 0.5);
    CHECK(plan.scenarios[4].n_pattern() == "24/32/36/40/168");

    CHECK_THROWS_AS(parse_config_json(R"({"grid": {"k": [5], "n": [40], "delta": [0], "tau2": [0]}, "rep": 3})"),
                    DataError);
    CHECK_THROWS_AS(parse_config_json(R"({"grid": {"k": [5], "n": [40], "delta": [0]}})"), DataError);
    CHECK_THROWS_AS(parse_config_json("{not json"), DataError);
    CHECK_THROWS_AS(parse_config_json(R"({"scenarios": [{"k": 1, "n": 40}]})"), DataError);
  }

  TEST_CASE("manifests") {
    const auto out = scratch("m.csv");
    RunManifest m;
    m.command = "simulate";
    m.output_paths = {out.string()};
    m.seed = 42;
    m.argv = {"magmeta", "simulate"};
    write_manifests(m);
    const auto j = nlohmann::json::parse(read_file(out.string() + ".manifest.json"));
    CHECK(j["command"] == "simulate");
    CHECK(j["seed"] == 42);
    CHECK(j["tool_version"] == kToolVersion);
    CHECK_FALSE(j["timestamp"].get<std::string>().empty());
  }

  TEST_CASE("SVG panels") {
    std::vector<SummaryRow> rows;
    for (int k : {5, 10}) {
      for (double t : {0.0, 0.4, 0.8}) {
        rows.push_back(row(k, "100", t, "MP", 0.9));
        rows.push_back(row(k, "100", t, "SSC", 0.94));
      }
    }
    auto other = row(5, "100", 0.0, "MP", 0.5);
    other.delta = 0.5;
    rows.push_back(other);
    const auto svg = render_svg(rows, "coverage_naive", 0.0);
    CHECK(svg.rfind("<?xml", 0) == 0);
    CHECK(count(svg, "<svg ") == 1);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(count(svg, "<polyline") == 4);
    CHECK(count(svg, "data-method=\"MP\"") == 2);
    CHECK(count(svg, "<g>") == count(svg, "</g>"));
    CHECK_THROWS_AS(render_svg(rows, "power_cond_chi2", 0.0), DataError);

    const auto report = render_report(rows);
    CHECK(report.find("MP") != std::string::npos);
    CHECK(report.find("SSC") != std::string::npos);
  }

  TEST_CASE("command line exit codes") {
    CHECK(run({"--version"}).code == kExitOk);
    CHECK(run({}).code == kExitUsage);
    CHECK(run({"frobnicate"}).code == kExitUsage);
    CHECK(run({"ci", "--d", "0.5"}).code == kExitUsage);
    CHECK(run({"ci", "--d", "0.5", "--nt", "20", "--nc", "20", "--alpha", "2"}).code == kExitUsage);
    CHECK(run({"analyze", "--input", "/nonexistent/x.csv"}).code == kExitData);
    CHECK(run({"simulate", "--grid", "reduced", "--config", "x.json", "--out", "o.csv"}).code == kExitUsage);
    CHECK(run({"simulate", "--grid", "reduced", "--methods", "MP,REML", "--out", "o.csv"}).code == kExitUsage);
  }

  TEST_CASE("ci subcommand") {
    const auto zero = run({"ci", "--d", "0", "--nt", "20", "--nc", "20"});
    CHECK(zero.code == kExitOk);
    CHECK(zero.out.find("delta^2 interval (95%): [0, 0]") != std::string::npos);
    CHECK(zero.out.find("|delta| interval (95%): [0, 0]") != std::string::npos);
    const auto half = run({"ci", "--d", "0.5", "--nt", "50", "--nc", "50"});
    CHECK(half.code == kExitOk);
    const auto e = derive_effect(StudySummary::from_d(50, 50, 0.5));
    const auto s = steiger_ci(0.5, e.m, e.n_eff, 0.05);
    CHECK(half.out.find("delta^2 interval (95%): [" + format_double(s.delta2.lower) + ", " +
                        format_double(s.delta2.upper) + "]") != std::string::npos);
    CHECK(s.delta2.lower == doctest::Approx(0.008894122844787505).epsilon(1e-8));
    const auto ninety = run({"ci", "--d", "0.5", "--nt", "50", "--nc", "50", "--alpha", "0.1"});
    CHECK(ninety.out.find("(90%)") != std::string::npos);
  }

  TEST_CASE("analyze subcommand") {
    const auto csv = scratch("two.csv");
    write_file(csv, "study_id,n_t,n_c,d\na,30,30,0.4\nb,40,45,0.1\n");
    const auto r = run({"analyze", "--input", csv.string(), "--bootstrap-b", "2000", "--seed", "9"});
    CHECK(r.code == kExitOk);
    CHECK(r.out == render_analysis(read_studies_csv(csv.string()), 0.05, 2000, 9));
    CHECK(run({"analyze", "--input", csv.string(), "--bootstrap-b", "10"}).code == kExitUsage);

    const auto rep = scratch("two.md");
    fs::remove(rep.string() + ".manifest.json");
    const auto w = run({"analyze", "--input", csv.string(), "--out", rep.string()});
    CHECK(w.code == kExitOk);
    CHECK(fs::exists(rep));
    CHECK(fs::exists(rep.string() + ".manifest.json"));

    const auto bad = scratch("bad.csv");
    write_file(bad, "study_id,n_t,n_c,d\na,30,30,0.4\nb,x,45,0.1\n");
    const auto e = run({"analyze", "--input", bad.string()});
    CHECK(e.code == kExitData);
    CHECK(e.err.find("line 3") != std::string::npos);
  }

  TEST_CASE("simulate subcommand with a config file") {
    const auto cfg = scratch("tiny.json");
    write_file(cfg, R"({"reps": 20, "bootstrap_b": 1000, "scenarios": [{"k": 5, "n": 40, "delta": 0.5, "tau2": 0.2}]})");
    const auto out = scratch("tiny.csv");
    const auto svg = scratch("tiny.svg");
    const auto r = run({"simulate", "--config", cfg.string(), "--threads", "2", "--out", out.string(), "--svg",
                        svg.string(), "--plot-delta", "0.5"});
    CHECK(r.code == kExitOk);
    const auto rows = read_results_csv(out.string());
    CHECK_FALSE(rows.empty());
    for (const auto& x : rows) CHECK(x.delta == 0.5);
    CHECK(fs::exists(out.string() + ".manifest.json"));
    CHECK(fs::exists(svg.string() + ".manifest.json"));
  }
}
