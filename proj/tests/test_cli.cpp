#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "d2oc/cli_bench.hpp"

using namespace d2oc;

namespace {

namespace fs = std::filesystem;

std::string config_path(const std::string& name) {
  return std::string(D2OC_CONFIG_DIR) + "/" + name;
}

std::string write_temp(const std::string& name, const std::string& body) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream out(p);
  out << body;
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("load_config: bundled default parses to the documented setup") {
  const Experiment exp = load_config(config_path("default.cfg"));
  CHECK(exp.swarm.n_agents == 10);
  CHECK(exp.swarm.fleet == FleetKind::kQuadrotor8);
  CHECK(exp.swarm.domain.hi(0) == doctest::Approx(100.0));
  CHECK(exp.swarm.comm_range == doctest::Approx(15.0));
  CHECK(exp.swarm.horizon == 30);
  CHECK(exp.swarm.coverage_target == doctest::Approx(0.99));
  CHECK(exp.swarm.backend == SolverBackend::kCondensed);
  CHECK(exp.bench.horizons == std::vector<int>{10, 20, 30, 40, 50, 60});
  CHECK(exp.bench.repetitions == 50);
  CHECK(exp.swarm.gmm.size() == 3);
}

TEST_CASE("load_config: malformed json carries a line diagnostic") {
  const std::string path = write_temp(
      "d2oc_bad.cfg", "{\n  \"fleet\": {\n  \"model\": oops\n}\n");
  try {
    load_config(path);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("load_config: unknown backend names the valid values") {
  const std::string path = write_temp(
      "d2oc_backend.cfg",
      R"({"solver": {"backend": "warp_drive"}, "fleet": {"model": "scalar"}})");
  try {
    load_config(path);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("full_kkt") != std::string::npos);
    CHECK(msg.find("condensed_stable") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("cmd_simulate: writes trace, summary and field snapshots") {
  CliOptions opts;
  opts.out_dir = (fs::temp_directory_path() / "d2oc_sim_out").string();
  fs::remove_all(opts.out_dir);
  const int rc = cmd_simulate(config_path("smoke.cfg"), opts);
  CHECK(rc == 0);
  CHECK(fs::exists(opts.out_dir + "/trace.jsonl"));
  CHECK(fs::exists(opts.out_dir + "/summary.csv"));
  CHECK(fs::exists(opts.out_dir + "/field.csv"));
  CHECK(fs::exists(opts.out_dir + "/field_initial.csv"));

  const std::string summary = slurp(opts.out_dir + "/summary.csv");
  CHECK(summary.rfind("step,coverage,total_mass,mean_solve_ms", 0) == 0);
  const std::string field = slurp(opts.out_dir + "/field.csv");
  CHECK(field.rfind("x,y,gamma", 0) == 0);
  fs::remove_all(opts.out_dir);
}

TEST_CASE("cmd_simulate: config errors exit with code 2") {
  CliOptions opts;
  opts.out_dir = (fs::temp_directory_path() / "d2oc_sim_err").string();
  const std::string path = write_temp("d2oc_broken.cfg", "{ nope");
  CHECK(cmd_simulate(path, opts) == 2);
  std::remove(path.c_str());

  const std::string bad_backend = write_temp(
      "d2oc_bad_backend.cfg",
      R"({"solver": {"backend": "nope"}, "fleet": {"model": "scalar"}})");
  CHECK(cmd_simulate(bad_backend, opts) == 2);
  std::remove(bad_backend.c_str());
}

TEST_CASE("cmd_bench: records, slopes and schema stability") {
  CliOptions opts;
  opts.out_dir = (fs::temp_directory_path() / "d2oc_bench_out").string();
  fs::remove_all(opts.out_dir);
  const int rc = cmd_bench(config_path("smoke.cfg"), opts);
  CHECK(rc == 0);

  const std::string csv = slurp(opts.out_dir + "/bench.csv");
  CHECK(csv.rfind("backend,horizon,n,m,repetitions,mean_ms,std_ms,min_ms,max_ms",
                  0) == 0);
  // one row per (backend, horizon): 2 backends x 2 horizons + header
  int lines = 0;
  for (char c : csv) lines += c == '\n';
  CHECK(lines == 5);
  CHECK(fs::exists(opts.out_dir + "/slopes.csv"));
  CHECK(fs::exists(opts.out_dir + "/report.txt"));

  // rerun: identical non-timing columns
  std::string again_dir = opts.out_dir + "_again";
  CliOptions opts2 = opts;
  opts2.out_dir = again_dir;
  CHECK(cmd_bench(config_path("smoke.cfg"), opts2) == 0);
  const std::string csv2 = slurp(again_dir + "/bench.csv");
  auto non_timing = [](const std::string& text) {
    std::string acc;
    std::istringstream ss(text);
    std::string lineside;
    while (std::getline(ss, lineside)) {
      std::size_t field = 0, start = 0;
      for (std::size_t i = 0; i <= lineside.size(); ++i) {
        if (i == lineside.size() || lineside[i] == ',') {
          if (field < 5) acc += lineside.substr(start, i - start) + ",";
          start = i + 1;
          ++field;
        }
      }
      acc += "\n";
    }
    return acc;
  };
  CHECK(non_timing(csv) == non_timing(csv2));
  fs::remove_all(opts.out_dir);
  fs::remove_all(again_dir);
}

TEST_CASE("cmd_bench: single horizon emits records but no slope file") {
  const std::string path = write_temp("d2oc_single_T.cfg", R"({
    "fleet": {"model": "double_integrator"},
    "field": {"domain": [0,0,40,40], "n_sp": 80,
      "components": [{"mean": [20,20], "cov": [[20,0],[0,20]], "weight": 1.0}]},
    "bench": {"horizons": [6], "repetitions": 1, "backends": ["condensed"]}
  })");
  CliOptions opts;
  opts.out_dir = (fs::temp_directory_path() / "d2oc_bench_single").string();
  fs::remove_all(opts.out_dir);
  CHECK(cmd_bench(path, opts) == 0);
  CHECK(fs::exists(opts.out_dir + "/bench.csv"));
  CHECK_FALSE(fs::exists(opts.out_dir + "/slopes.csv"));

  // a single repetition has zero standard deviation by definition
  const std::string csv = slurp(opts.out_dir + "/bench.csv");
  std::istringstream ss(csv);
  std::string header, row;
  std::getline(ss, header);
  std::getline(ss, row);
  int commas = 0;
  std::size_t std_begin = 0, std_end = 0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (row[i] == ',') {
      ++commas;
      if (commas == 6) std_begin = i + 1;
      if (commas == 7) std_end = i;
    }
  }
  CHECK(std::stod(row.substr(std_begin, std_end - std_begin)) == 0.0);
  fs::remove_all(opts.out_dir);
  std::remove(path.c_str());
}

TEST_CASE("verify checks: pristine pass, perturbed Hessian fails") {
  const auto checks = run_verify_checks(0.0);
  // every check name appears exactly once
  for (std::size_t i = 0; i < checks.size(); ++i) {
    for (std::size_t j = i + 1; j < checks.size(); ++j) {
      CHECK(checks[i].name != checks[j].name);
    }
    CHECK(checks[i].passed);
  }

  const auto broken = run_verify_checks(1e-3);
  bool schur_failed = false;
  for (const auto& c : broken) {
    if (c.name == "condensed-vs-schur") schur_failed = !c.passed;
  }
  CHECK(schur_failed);
}

TEST_CASE("cmd_verify: exit codes and report") {
  CliOptions opts;
  opts.out_dir = (fs::temp_directory_path() / "d2oc_verify_out").string();
  fs::remove_all(opts.out_dir);
  CHECK(cmd_verify(opts) == 0);
  const std::string report = slurp(opts.out_dir + "/report.txt");
  CHECK(report.find("condensed-vs-schur: PASS") != std::string::npos);
  CHECK(report.find("dual-newton-vs-grid: PASS") != std::string::npos);

  opts.inject_h_perturb = 1e-3;
  CHECK(cmd_verify(opts) == 1);
  fs::remove_all(opts.out_dir);
}
