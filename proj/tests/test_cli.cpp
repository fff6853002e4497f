#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "contactq/cli.hpp"
#include "contactq/geometry.hpp"
#include "contactq/refint.hpp"

using namespace cq;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "contactq_cli_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig parse_only(const std::string& text) {
  return load_config_text(text, fs::temp_directory_path() / "contactq_cli_tests");
}

double residual_of(const TaskOutcome& task, const std::string& name) {
  for (const auto& [key, value] : task.residuals)
    if (key == name) return value;
  FAIL("residual not found: " << name);
  return 0.0;
}

const char* kThermoLine = R"json({
  "system": {
    "family": "thermo", "n": 1,
    "a": ["1"], "g": ["x"], "c": [1.0],
    "base_box": {"lo": [0.25], "hi": [2.0]},
    "param_box": {"lo": [-1.0, -1.0], "hi": [1.0, 1.0]}
  },
  "tasks": ["verify", "reconstruct", "compare", "first-integrals"],
  "trajectory": {"start_base": [0.7], "lambda": [0.3, -0.4], "t1": 1.0, "points": 21}
})json";

}  // namespace

TEST_CASE("configuration validation names the offending key") {
  CHECK_THROWS_WITH_AS(parse_only(R"({"system": {"family": "raw"}, "tasks": ["verify"]})"),
                       doctest::Contains("system.H required"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_only(R"({"tasks": ["verify"]})"),
                       doctest::Contains("config.system required"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_only(R"({"system": {"family": "raw", "H": "y"}, "tasks": ["verify"],
                     "tolerances": {"verify": -1.0}})"),
      doctest::Contains("tolerances.verify must be positive"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_only(R"({"system": {"family": "raw", "H": "y"}, "tasks": ["polish"]})"),
      doctest::Contains("unknown task 'polish'"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_only(R"({"system": {"family": "raw", "H": "y"}, "tasks": ["verify", "verify"]})"),
      doctest::Contains("duplicate task"), ConfigError);
  // Parse errors surface the parser diagnostic with its position.
  CHECK_THROWS_WITH_AS(parse_only("{\"system\": }"), doctest::Contains("parse error"),
                       ConfigError);
  // Unknown variables in expression text fail at load time.
  CHECK_THROWS_WITH_AS(
      parse_only(R"({"system": {"family": "raw", "H": "y + w"}, "tasks": ["verify"]})"),
      doctest::Contains("system.H"), ConfigError);
  // Empty boxes are rejected.
  CHECK_THROWS_WITH_AS(parse_only(R"json({
      "system": {"family": "thermo", "a": ["1"], "g": ["x"], "c": [1.0],
                 "base_box": {"lo": [2.0], "hi": [0.25]},
                 "param_box": {"lo": [-1.0, -1.0], "hi": [1.0, 1.0]}},
      "tasks": ["verify"]})json"),
                       doctest::Contains("empty on axis"), ConfigError);
  // The packaged oscillator family refuses non-real branch exponents.
  CHECK_THROWS_WITH_AS(
      parse_only(R"({"system": {"family": "damped_oscillator", "alpha": 0.5},
                     "tasks": ["verify"]})"),
      doctest::Contains("|alpha| > 2"), ConfigError);
  // Tasks that need a family cannot run without a solution block.
  CHECK_THROWS_WITH_AS(
      parse_only(R"({"system": {"family": "raw", "H": "y"}, "tasks": ["verify"]})"),
      doctest::Contains("solution block required"), ConfigError);
  // The restriction-style checks only cover the verify task.
  CHECK_THROWS_WITH_AS(
      parse_only(R"({"system": {"family": "liouville_sphere"}, "tasks": ["verify", "integrate"]})"),
      doctest::Contains("not available for family liouville_sphere"), ConfigError);
  // Compare needs something to compare.
  CHECK_THROWS_WITH_AS(parse_only(R"json({
      "system": {"family": "damped_oscillator", "alpha": 2.5},
      "tasks": ["verify", "compare"],
      "trajectory": {"start_base": [1.0], "lambda": [1.0, 0.0]}})json"),
                       doctest::Contains("preceding reconstruct or integrate"), ConfigError);
  // Start data is dimension-checked up front.
  CHECK_THROWS_WITH_AS(parse_only(R"json({
      "system": {"family": "damped_oscillator", "alpha": 2.5},
      "tasks": ["reconstruct"],
      "trajectory": {"start_base": [1.0], "lambda": [1.0]}})json"),
                       doctest::Contains("trajectory.lambda must have 2 entries"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_only(R"json({
      "system": {"family": "damped_oscillator", "alpha": 2.5},
      "tasks": ["reconstruct"]})json"),
                       doctest::Contains("trajectory.start_base and trajectory.lambda required"),
                       ConfigError);
}

TEST_CASE("defaults are filled for a minimal configuration") {
  const RunConfig cfg = parse_only(kThermoLine);
  CHECK(cfg.seed == 42);
  CHECK(cfg.tolerances.quadrature == 1e-10);
  CHECK(cfg.tolerances.verify == 1e-8);
  CHECK(cfg.tolerances.compare == 1e-6);
  CHECK(cfg.format == TrajectoryFormat::Csv);
  CHECK(cfg.trajectory.rk4_step == 1e-3);
  CHECK(cfg.solution.base_samples == 40);
  CHECK(cfg.tasks.size() == 4);
  CHECK(cfg.tasks[0] == TaskKind::Verify);
  CHECK(cfg.tasks[3] == TaskKind::FirstIntegrals);
}

TEST_CASE("the shipped demo configurations parse and run") {
  const RunConfig osc = load_config("configs/oscillator_demo.json");
  CHECK(osc.system.family == "damped_oscillator");
  CHECK(osc.system.oscillator.alpha == 2.5);
  CHECK(osc.tasks == std::vector<TaskKind>{TaskKind::Verify, TaskKind::Integrate,
                                           TaskKind::Compare});
  CHECK(osc.restriction.present);

  // Every shipped config must execute with its documented exit code; the
  // broken family is the only one meant to fail.
  const std::vector<std::pair<std::string, int>> demos = {
      {"thermo_demo", 0},      {"thermo_drift_demo", 0}, {"oscillator_demo", 0},
      {"oscillator_reciprocal_demo", 0}, {"liouville_demo", 0},
      {"broken_family_demo", 1}, {"reeb_flow_demo", 0}};
  for (const auto& [name, expected] : demos) {
    CAPTURE(name);
    RunConfig cfg = load_config("configs/" + name + ".json");
    cfg.out_dir = fresh_dir("demo_" + name);
    const RunReport report = run(cfg);
    CHECK(report.exit_code == expected);
  }
}

TEST_CASE("trajectory files round-trip bit-exactly in both formats") {
  // Reeb flow of the reference structure: three steps give a four-row file.
  const ContactSystem sys = ContactSystem::darboux(1, make_expr_field("1", {"x", "y", "z"}));
  const Eigen::Vector3d start(0.3, -0.1, 0.2);
  Trajectory traj = integrate_contact_rk4(sys, start, 0.0, 0.3, Rk4Options{0.1});
  REQUIRE(traj.size() == 4);

  const fs::path dir = fresh_dir("roundtrip");
  const fs::path csv = dir / "traj.csv";
  const fs::path jsn = dir / "traj.json";
  export_trajectory(traj, csv, TrajectoryFormat::Csv);
  export_trajectory(traj, jsn, TrajectoryFormat::Json);

  std::ifstream file(csv);
  std::string line;
  int lines = 0;
  bool header_ok = false;
  while (std::getline(file, line)) {
    if (lines == 0) header_ok = (line == "t,x1,y1,z");
    ++lines;
  }
  CHECK(lines == 5);
  CHECK(header_ok);

  for (const fs::path& path : {csv, jsn}) {
    CAPTURE(path.string());
    const Trajectory back = load_trajectory(path);
    REQUIRE(back.size() == traj.size());
    for (int i = 0; i < traj.size(); ++i) {
      CHECK(back.times[i] == traj.times[i]);
      for (int c = 0; c < 3; ++c) CHECK(back.states[i][c] == traj.states[i][c]);
    }
  }
}

TEST_CASE("the transport pipeline runs end to end through the front door") {
  const fs::path dir = fresh_dir("thermo_line");
  RunConfig cfg = parse_only(kThermoLine);
  cfg.out_dir = dir;
  const RunReport report = run(cfg);

  REQUIRE(report.tasks.size() == 4);
  CHECK(report.tasks[0].name == "verify");
  CHECK(report.tasks[0].status == "pass");
  CHECK(residual_of(report.tasks[0], "max_pseudo_isotropy") < 1e-10);
  CHECK(residual_of(report.tasks[0], "min_abs_det") > 0.5);

  CHECK(report.tasks[1].status == "pass");
  CHECK(fs::exists(report.tasks[1].trajectory_path));

  CHECK(report.tasks[2].status == "pass");
  CHECK(residual_of(report.tasks[2], "max_abs_error") < 1e-8);
  // The exported file reproduces the in-memory trajectory exactly.
  CHECK(residual_of(report.tasks[2], "file_roundtrip") == 0.0);

  CHECK(report.tasks[3].status == "pass");
  CHECK(residual_of(report.tasks[3], "max_roundtrip") < 1e-9);
  CHECK(residual_of(report.tasks[3], "max_drift") < 1e-7);

  CHECK(report.exit_code == 0);
  CHECK(fs::exists(dir / "report.json"));
}

TEST_CASE("a broken family fails verify and blocks the dependent tasks") {
  const fs::path dir = fresh_dir("broken");
  RunConfig cfg = load_config("configs/broken_family_demo.json");
  cfg.out_dir = dir;
  const RunReport report = run(cfg);

  REQUIRE(report.tasks.size() == 2);
  CHECK(report.tasks[0].status == "fail");
  // The report carries the nonzero pseudo-isotropy defect of the family.
  CHECK(residual_of(report.tasks[0], "max_pseudo_isotropy") > 0.5);
  CHECK(report.tasks[1].status == "skipped");
  CHECK(report.tasks[1].message == "skipped: verify did not pass");
  CHECK(report.exit_code == 1);
}

TEST_CASE("the zero-level branch runs through the front door") {
  const fs::path dir = fresh_dir("oscillator_demo");
  RunConfig cfg = load_config("configs/oscillator_demo.json");
  cfg.out_dir = dir;
  const RunReport report = run(cfg);

  REQUIRE(report.tasks.size() == 3);
  for (const TaskOutcome& task : report.tasks) {
    CAPTURE(task.name);
    CAPTURE(task.message);
    CHECK(task.status == "pass");
  }
  CHECK(report.tasks[1].message == "region: zero-level");
  CHECK(residual_of(report.tasks[2], "max_abs_error") < 1e-6);
  CHECK(report.exit_code == 0);
}

TEST_CASE("the rescaled transport family reports its factor residuals") {
  const fs::path dir = fresh_dir("thermo_drift");
  RunConfig cfg = load_config("configs/thermo_drift_demo.json");
  cfg.out_dir = dir;
  cfg.format = TrajectoryFormat::Json;  // exercise the JSON artifact path
  const RunReport report = run(cfg);

  REQUIRE(report.tasks.size() == 4);
  CHECK(report.tasks[0].status == "pass");
  CHECK(residual_of(report.tasks[0], "max_rescaled_isotropy") < 1e-9);
  CHECK(residual_of(report.tasks[0], "max_rate_equation") < 1e-9);

  CHECK(report.tasks[1].status == "pass");
  CHECK(report.tasks[1].message == "mode: explicit_factor");
  CHECK(fs::path(report.tasks[1].trajectory_path).extension() == ".json");

  CHECK(report.tasks[2].status == "pass");
  CHECK(residual_of(report.tasks[2], "file_roundtrip") == 0.0);
  CHECK(report.tasks[3].status == "pass");
  CHECK(report.exit_code == 0);
}

TEST_CASE("identical configurations produce identical report values") {
  RunConfig first = parse_only(kThermoLine);
  first.out_dir = fresh_dir("determinism_a");
  RunConfig second = parse_only(kThermoLine);
  second.out_dir = fresh_dir("determinism_b");

  const RunReport a = run(first);
  const RunReport b = run(second);
  REQUIRE(a.tasks.size() == b.tasks.size());
  for (std::size_t i = 0; i < a.tasks.size(); ++i) {
    CHECK(a.tasks[i].status == b.tasks[i].status);
    REQUIRE(a.tasks[i].residuals.size() == b.tasks[i].residuals.size());
    for (std::size_t r = 0; r < a.tasks[i].residuals.size(); ++r) {
      CHECK(a.tasks[i].residuals[r].first == b.tasks[i].residuals[r].first);
      CHECK(a.tasks[i].residuals[r].second == b.tasks[i].residuals[r].second);
    }
  }
  CHECK(a.exit_code == b.exit_code);
}

TEST_CASE("family construction failures are runtime errors, not silent passes") {
  const fs::path dir = fresh_dir("bad_family");
  // f = 0 cannot satisfy its transport equation once a0 is nonzero; the
  // config is structurally fine, so the failure surfaces at run time.
  RunConfig cfg = parse_only(R"json({
    "system": {
      "family": "thermo", "n": 1, "a0": 0.5,
      "a": ["1"], "g": ["x"], "c": [1.0],
      "base_box": {"lo": [0.25], "hi": [2.0]},
      "param_box": {"lo": [-1.0, -1.0], "hi": [1.0, 1.0]}
    },
    "tasks": ["verify", "reconstruct"],
    "trajectory": {"start_base": [0.7], "lambda": [0.3, -0.4]}
  })json");
  cfg.out_dir = dir;
  const RunReport report = run(cfg);
  REQUIRE(report.tasks.size() == 2);
  CHECK(report.tasks[0].status == "error");
  CHECK(report.tasks[0].message.find("transport equation") != std::string::npos);
  CHECK(report.tasks[1].status == "skipped");
  CHECK(report.exit_code == 3);
}

TEST_CASE("mutated configurations must revalidate") {
  RunConfig cfg = parse_only(kThermoLine);
  CHECK_NOTHROW(validate_config(cfg));
  cfg.trajectory.lambda.reset();
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
}

TEST_CASE("export rejects unwritable paths") {
  Trajectory traj;
  traj.times = {0.0};
  traj.states = {Eigen::Vector3d(1.0, 2.0, 3.0)};
  CHECK_THROWS_AS(
      export_trajectory(traj, "/nonexistent_dir_for_cli_test/x.csv", TrajectoryFormat::Csv),
      std::runtime_error);
}
