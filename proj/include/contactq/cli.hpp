#pragma once

// Batch front door. A JSON configuration names a system (a packaged family
// or raw expression text), optionally a solution family, and an ordered task
// list; run() executes the tasks, writes trajectory artifacts and a JSON
// report into the output directory, and maps the outcome onto the exit-code
// contract: 0 all tasks pass, 1 a verification failed, 2 configuration
// error, 3 runtime numerical failure.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "contactq/box.hpp"
#include "contactq/refint.hpp"
#include "contactq/systems.hpp"

namespace cq {

// Structural or parse problems in a configuration; callers translate it to
// exit code 2. Numerical failures inside tasks are reported per task instead.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class TaskKind { Verify, Reconstruct, Integrate, Compare, FirstIntegrals };

std::string task_name(TaskKind kind);

enum class TrajectoryFormat { Csv, Json };

// System block. Exactly one family is active; the unused specs keep their
// defaults. Raw systems carry expression text over the chart names
// (x, y, z for n = 1, else x1..xn, y1..yn, z).
struct SystemConfig {
  std::string family = "raw";  // raw | thermo | damped_oscillator | liouville_sphere
  int n = 1;
  std::string hamiltonian_text;          // key "H"
  std::string factor_text;               // key "g", conformal factor
  std::string form = "reference";        // reference | scaled | reciprocal
  ThermoSpec thermo;
  OscillatorSpec oscillator;
  LiouvilleSpec liouville;
};

// Solution block. Packaged families carry their own solution; the block then
// only tunes the verification grid. Raw systems define the family here: one
// expression per fiber coordinate over (base coordinates, l1..lk).
struct SolutionConfig {
  bool present = false;
  std::string fibration = "x";  // x | xz | yz
  std::vector<std::string> components;
  Box base_box;
  Box param_box;
  int base_samples = 40;
  int param_samples = 8;
};

struct ToleranceConfig {
  double quadrature = 1e-10;      // table building and zero-level quadratures
  double solver = 1e-9;           // pointwise algebraic-solve acceptance
  double classification = 1e-9;   // level/rate thresholds for start dispatch
  double verify = 1e-8;           // pass threshold for verification residuals
  double compare = 1e-6;          // pass threshold for trajectory deviation
};

// Shared start/horizon data for the trajectory-producing tasks.
struct TrajectoryConfig {
  std::optional<Eigen::VectorXd> start_base;
  std::optional<Eigen::VectorXd> lambda;
  std::optional<Eigen::VectorXd> start_state;  // raw phase point (integrate)
  double t1 = 1.0;
  int points = 21;
  double rk4_step = 1e-3;
  std::string mode = "auto";  // auto | plain | explicit_factor | reciprocal
};

// Declared zero-level restriction for the integrate task: a phase chart box
// over (x, y) plus sub-boxes of the solution boxes (zero-width axes pin
// parameters).
struct RestrictionBlock {
  bool present = false;
  Box chart_box;
  Box base_box;
  Box param_box;
  double initial_z = 0.0;
};

struct RunConfig {
  std::filesystem::path source;  // config file, or "<memory>" in tests
  std::uint64_t seed = 42;
  SystemConfig system;
  SolutionConfig solution;
  std::vector<TaskKind> tasks;
  ToleranceConfig tolerances;
  TrajectoryConfig trajectory;
  RestrictionBlock restriction;
  std::filesystem::path out_dir = "out";
  TrajectoryFormat format = TrajectoryFormat::Csv;
};

struct TaskOutcome {
  std::string name;
  std::string status;   // pass | fail | error | skipped
  std::string message;  // diagnostic for fail/error, reason for skipped
  double wall_ms = 0.0;
  std::vector<std::pair<std::string, double>> residuals;
  std::string trajectory_path;  // artifact written by this task, if any
};

struct RunReport {
  std::filesystem::path config_source;
  std::uint64_t seed = 42;
  std::vector<TaskOutcome> tasks;  // one entry per requested task, in order
  int exit_code = 0;
};

// Parses and validates a configuration, filling defaults. Throws ConfigError
// with the offending key (or the parser's line/column) on any defect;
// expression text is parsed eagerly so unknown variables fail here.
RunConfig load_config(const std::filesystem::path& path);

// Same from an in-memory document; source_dir anchors relative output paths.
RunConfig load_config_text(const std::string& text, const std::filesystem::path& source_dir);

// Cross-field constraints (task availability, start dimensions, restriction
// box shapes). load_config runs this; callers that mutate a loaded config,
// for example to override the task list, should run it again.
void validate_config(const RunConfig& config);

// Executes the tasks in order. Task errors are recorded in the report and
// dependent downstream tasks are skipped; independent tasks still run. The
// report is also written to <out>/report.json before returning.
RunReport run(const RunConfig& config);

std::string report_json(const RunReport& report);

// CSV: header t,x1..xn,y1..yn,z and one row per grid point, 17 significant
// digits. JSON: {meta, t, points}. Both round-trip doubles bit-exactly.
void export_trajectory(const Trajectory& traj, const std::filesystem::path& path,
                       TrajectoryFormat format);

// Reads either format back (dispatch on the .json extension).
Trajectory load_trajectory(const std::filesystem::path& path);

}  // namespace cq
