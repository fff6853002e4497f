#include "contactq/cli.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <sstream>

#include "contactq/expr.hpp"
#include "contactq/fields.hpp"
#include "contactq/geometry.hpp"
#include "contactq/hje.hpp"
#include "contactq/reconstruct.hpp"
#include "contactq/zero_level.hpp"

namespace cq {
namespace {

using nlohmann::json;

// ---------------------------------------------------------------- naming

std::vector<std::string> phase_names(int n) {
  if (n == 1) return {"x", "y", "z"};
  std::vector<std::string> names;
  for (int i = 1; i <= n; ++i) names.push_back("x" + std::to_string(i));
  for (int i = 1; i <= n; ++i) names.push_back("y" + std::to_string(i));
  names.push_back("z");
  return names;
}

std::vector<std::string> thermo_base_names(int n) {
  if (n == 1) return {"x"};
  std::vector<std::string> names;
  for (int i = 1; i <= n; ++i) names.push_back("x" + std::to_string(i));
  return names;
}

std::vector<std::string> liouville_names(int n) {
  std::vector<std::string> names;
  for (int i = 1; i <= n + 1; ++i) names.push_back("q" + std::to_string(i));
  for (int i = 1; i <= n + 1; ++i) names.push_back("p" + std::to_string(i));
  return names;
}

Fibration fibration_from(const std::string& kind, int n) {
  if (kind == "x") return Fibration::x_projection(n);
  if (kind == "xz") return Fibration::xz_projection(n);
  if (kind == "yz") return Fibration::yz_projection(n);
  throw ConfigError("solution.fibration must be one of x, xz, yz");
}

// Variable names of the base coordinates of a fibration, in chart order.
std::vector<std::string> fibration_base_names(const Fibration& fib) {
  const std::vector<std::string> phase = phase_names(fib.n);
  std::vector<std::string> names;
  for (int index : fib.base_indices()) names.push_back(phase[index]);
  return names;
}

std::vector<std::string> param_names(int k) {
  std::vector<std::string> names;
  for (int i = 1; i <= k; ++i) names.push_back("l" + std::to_string(i));
  return names;
}

// ---------------------------------------------------------------- json access

const json& need(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(where + "." + key + " required");
  return j.at(key);
}

double as_double(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + " must be a number");
  return j.get<double>();
}

int as_int(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where + " must be an integer");
  return j.get<int>();
}

std::string as_string(const json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + " must be a string");
  return j.get<std::string>();
}

std::vector<std::string> as_string_array(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be an array of strings");
  std::vector<std::string> out;
  for (const json& item : j) out.push_back(as_string(item, where + " entry"));
  return out;
}

Eigen::VectorXd as_vector(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be an array of numbers");
  Eigen::VectorXd out(static_cast<int>(j.size()));
  int i = 0;
  for (const json& item : j) out[i++] = as_double(item, where + " entry");
  return out;
}

std::vector<double> as_double_list(const json& j, const std::string& where) {
  const Eigen::VectorXd v = as_vector(j, where);
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::MatrixXd as_matrix(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + " must be an array of rows");
  const int rows = static_cast<int>(j.size());
  Eigen::MatrixXd out;
  for (int r = 0; r < rows; ++r) {
    const Eigen::VectorXd row = as_vector(j.at(r), where + " row");
    if (r == 0) out.resize(rows, row.size());
    if (row.size() != out.cols()) throw ConfigError(where + " rows must have equal length");
    out.row(r) = row;
  }
  return out;
}

Box as_box(const json& j, const std::string& where) {
  const Eigen::VectorXd lo = as_vector(need(j, "lo", where), where + ".lo");
  const Eigen::VectorXd hi = as_vector(need(j, "hi", where), where + ".hi");
  if (lo.size() == 0) throw ConfigError(where + " must not be empty");
  if (lo.size() != hi.size()) throw ConfigError(where + ".lo and .hi must have equal length");
  for (int i = 0; i < lo.size(); ++i)
    if (lo[i] > hi[i]) throw ConfigError(where + " is empty on axis " + std::to_string(i));
  return Box(lo, hi);
}

double opt_double(const json& j, const char* key, double fallback, const std::string& where) {
  return j.contains(key) ? as_double(j.at(key), where + "." + key) : fallback;
}

int opt_int(const json& j, const char* key, int fallback, const std::string& where) {
  return j.contains(key) ? as_int(j.at(key), where + "." + key) : fallback;
}

std::string opt_string(const json& j, const char* key, const std::string& fallback,
                       const std::string& where) {
  return j.contains(key) ? as_string(j.at(key), where + "." + key) : fallback;
}

void parse_checked(const std::string& text, const std::vector<std::string>& vars,
                   const std::string& where) {
  try {
    parse_expression(text, vars);
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

// ---------------------------------------------------------------- config

struct FamilyDims {
  int n = 1;         // Darboux index, phase dimension 2n + 1
  int base = 1;      // dim of the solution base
  int params = 1;    // dim of the parameter space
  bool has_solution = false;
};

FamilyDims dims_of(const RunConfig& cfg) {
  FamilyDims d;
  if (cfg.system.family == "thermo") {
    d.n = cfg.system.thermo.n;
    d.base = d.n;
    d.params = d.n + 1;
    d.has_solution = true;
  } else if (cfg.system.family == "damped_oscillator") {
    d.n = 1;
    d.base = 1;
    d.params = 2;
    d.has_solution = true;
  } else if (cfg.system.family == "raw") {
    d.n = cfg.system.n;
    if (cfg.solution.present) {
      const Fibration fib = fibration_from(cfg.solution.fibration, d.n);
      d.base = fib.dim_base();
      d.params = fib.dim_fiber();
      d.has_solution = true;
    }
  }
  return d;
}

TaskKind task_from_name(const std::string& name) {
  if (name == "verify") return TaskKind::Verify;
  if (name == "reconstruct") return TaskKind::Reconstruct;
  if (name == "integrate") return TaskKind::Integrate;
  if (name == "compare") return TaskKind::Compare;
  if (name == "first-integrals") return TaskKind::FirstIntegrals;
  throw ConfigError("tasks: unknown task '" + name + "'");
}

void parse_system(const json& doc, RunConfig& cfg) {
  const json& sys = need(doc, "system", "config");
  cfg.system.family = opt_string(sys, "family", "raw", "system");
  const std::string& family = cfg.system.family;

  if (family == "raw") {
    cfg.system.n = opt_int(sys, "n", 1, "system");
    if (cfg.system.n < 1) throw ConfigError("system.n must be a positive integer");
    cfg.system.hamiltonian_text = as_string(need(sys, "H", "system"), "system.H");
    parse_checked(cfg.system.hamiltonian_text, phase_names(cfg.system.n), "system.H");
    cfg.system.form = opt_string(sys, "form", "reference", "system");
    if (cfg.system.form != "reference" && cfg.system.form != "scaled" &&
        cfg.system.form != "reciprocal")
      throw ConfigError("system.form must be one of reference, scaled, reciprocal");
    if (sys.contains("g")) {
      cfg.system.factor_text = as_string(sys.at("g"), "system.g");
      parse_checked(cfg.system.factor_text, phase_names(cfg.system.n), "system.g");
    } else if (cfg.system.form == "scaled") {
      throw ConfigError("system.g required");
    }
    return;
  }

  if (family == "thermo") {
    ThermoSpec& t = cfg.system.thermo;
    t.n = opt_int(sys, "n", 1, "system");
    if (t.n < 1) throw ConfigError("system.n must be a positive integer");
    t.a0 = opt_double(sys, "a0", 0.0, "system");
    t.a = as_string_array(need(sys, "a", "system"), "system.a");
    t.phi = opt_string(sys, "phi", "0", "system");
    t.f = opt_string(sys, "f", "0", "system");
    t.g = as_string_array(need(sys, "g", "system"), "system.g");
    t.c = as_double_list(need(sys, "c", "system"), "system.c");
    t.base_box = as_box(need(sys, "base_box", "system"), "system.base_box");
    t.param_box = as_box(need(sys, "param_box", "system"), "system.param_box");
    t.samples = opt_int(sys, "samples", 40, "system");
    t.residual_tolerance = opt_double(sys, "residual_tolerance", 1e-9, "system");
    t.seed = cfg.seed;
    const std::string count = std::to_string(t.n);
    if (static_cast<int>(t.a.size()) != t.n)
      throw ConfigError("system.a must list " + count + " expressions");
    if (static_cast<int>(t.g.size()) != t.n)
      throw ConfigError("system.g must list " + count + " expressions");
    if (static_cast<int>(t.c.size()) != t.n)
      throw ConfigError("system.c must list " + count + " numbers");
    if (t.base_box.dim() != t.n) throw ConfigError("system.base_box must have dimension " + count);
    if (t.param_box.dim() != t.n + 1)
      throw ConfigError("system.param_box must have dimension " + std::to_string(t.n + 1));
    const std::vector<std::string> names = thermo_base_names(t.n);
    for (std::size_t i = 0; i < t.a.size(); ++i)
      parse_checked(t.a[i], names, "system.a[" + std::to_string(i) + "]");
    for (std::size_t i = 0; i < t.g.size(); ++i)
      parse_checked(t.g[i], names, "system.g[" + std::to_string(i) + "]");
    parse_checked(t.phi, names, "system.phi");
    parse_checked(t.f, names, "system.f");
    return;
  }

  if (family == "damped_oscillator") {
    OscillatorSpec& o = cfg.system.oscillator;
    o.alpha = as_double(need(sys, "alpha", "system"), "system.alpha");
    if (std::abs(o.alpha) <= 2.0)
      throw ConfigError("system.alpha must satisfy |alpha| > 2 for the packaged family");
    o.anchor_q = opt_double(sys, "anchor_q", 1.0, "system");
    if (o.anchor_q <= 0.0) throw ConfigError("system.anchor_q must be positive");
    o.quadrature_tolerance = opt_double(sys, "quadrature_tolerance", 1e-12, "system");
    if (o.quadrature_tolerance <= 0.0)
      throw ConfigError("system.quadrature_tolerance must be positive");
    if (sys.contains("base_box")) o.base_box = as_box(sys.at("base_box"), "system.base_box");
    if (sys.contains("param_box")) o.param_box = as_box(sys.at("param_box"), "system.param_box");
    if (o.base_box.dim() != 0 && o.base_box.dim() != 1)
      throw ConfigError("system.base_box must have dimension 1");
    if (o.param_box.dim() != 0 && o.param_box.dim() != 2)
      throw ConfigError("system.param_box must have dimension 2");
    return;
  }

  if (family == "liouville_sphere") {
    LiouvilleSpec& l = cfg.system.liouville;
    l.n = opt_int(sys, "n", 1, "system");
    if (l.n < 1) throw ConfigError("system.n must be a positive integer");
    l.hamiltonian = opt_string(sys, "H", "", "system");
    if (!l.hamiltonian.empty()) parse_checked(l.hamiltonian, liouville_names(l.n), "system.H");
    l.level = opt_double(sys, "level", 1.0, "system");
    l.samples = opt_int(sys, "samples", 100, "system");
    if (l.samples < 1) throw ConfigError("system.samples must be positive");
    l.tolerance = opt_double(sys, "sampler_tolerance", 1e-9, "system");
    l.seed = cfg.seed;
    const int dim = 2 * l.n + 2;
    if (sys.contains("omega")) {
      l.omega = as_matrix(sys.at("omega"), "system.omega");
      if (l.omega.rows() != dim || l.omega.cols() != dim)
        throw ConfigError("system.omega must be " + std::to_string(dim) + "x" +
                          std::to_string(dim));
    }
    if (sys.contains("delta")) {
      l.delta = as_matrix(sys.at("delta"), "system.delta");
      if (l.delta.rows() != dim || l.delta.cols() != dim)
        throw ConfigError("system.delta must be " + std::to_string(dim) + "x" +
                          std::to_string(dim));
    }
    return;
  }

  throw ConfigError("system.family: unknown family '" + family + "'");
}

void parse_solution(const json& doc, RunConfig& cfg) {
  if (!doc.contains("solution")) return;
  const json& sol = doc.at("solution");
  cfg.solution.present = true;
  cfg.solution.fibration = opt_string(sol, "fibration", "x", "solution");
  cfg.solution.base_samples = opt_int(sol, "base_samples", 40, "solution");
  cfg.solution.param_samples = opt_int(sol, "param_samples", 8, "solution");
  if (cfg.solution.base_samples < 1 || cfg.solution.param_samples < 1)
    throw ConfigError("solution sample counts must be positive");

  if (cfg.system.family != "raw") {
    if (sol.contains("components"))
      throw ConfigError("solution.components not allowed for packaged families");
    return;
  }

  const Fibration fib = fibration_from(cfg.solution.fibration, cfg.system.n);
  cfg.solution.components = as_string_array(need(sol, "components", "solution"),
                                            "solution.components");
  cfg.solution.base_box = as_box(need(sol, "base_box", "solution"), "solution.base_box");
  cfg.solution.param_box = as_box(need(sol, "param_box", "solution"), "solution.param_box");
  if (static_cast<int>(cfg.solution.components.size()) != fib.dim_fiber())
    throw ConfigError("solution.components must list " + std::to_string(fib.dim_fiber()) +
                      " expressions (one per fiber coordinate)");
  if (cfg.solution.base_box.dim() != fib.dim_base())
    throw ConfigError("solution.base_box must have dimension " +
                      std::to_string(fib.dim_base()));
  if (cfg.solution.param_box.dim() != fib.dim_fiber())
    throw ConfigError("solution.param_box must have dimension " +
                      std::to_string(fib.dim_fiber()));
  std::vector<std::string> vars = fibration_base_names(fib);
  for (const std::string& name : param_names(fib.dim_fiber())) vars.push_back(name);
  for (std::size_t i = 0; i < cfg.solution.components.size(); ++i)
    parse_checked(cfg.solution.components[i], vars,
                  "solution.components[" + std::to_string(i) + "]");
}

void parse_tolerances(const json& doc, RunConfig& cfg) {
  if (!doc.contains("tolerances")) return;
  const json& tol = doc.at("tolerances");
  if (!tol.is_object()) throw ConfigError("tolerances must be an object");
  for (const auto& [key, value] : tol.items()) {
    const double v = as_double(value, "tolerances." + key);
    if (v <= 0.0) throw ConfigError("tolerances." + key + " must be positive");
    if (key == "quadrature")
      cfg.tolerances.quadrature = v;
    else if (key == "solver")
      cfg.tolerances.solver = v;
    else if (key == "classification")
      cfg.tolerances.classification = v;
    else if (key == "verify")
      cfg.tolerances.verify = v;
    else if (key == "compare")
      cfg.tolerances.compare = v;
    else
      throw ConfigError("tolerances." + key + " is not a known tolerance");
  }
}

void parse_trajectory(const json& doc, RunConfig& cfg) {
  if (!doc.contains("trajectory")) return;
  const json& tr = doc.at("trajectory");
  if (tr.contains("start_base"))
    cfg.trajectory.start_base = as_vector(tr.at("start_base"), "trajectory.start_base");
  if (tr.contains("lambda"))
    cfg.trajectory.lambda = as_vector(tr.at("lambda"), "trajectory.lambda");
  if (tr.contains("start_state"))
    cfg.trajectory.start_state = as_vector(tr.at("start_state"), "trajectory.start_state");
  cfg.trajectory.t1 = opt_double(tr, "t1", 1.0, "trajectory");
  cfg.trajectory.points = opt_int(tr, "points", 21, "trajectory");
  cfg.trajectory.rk4_step = opt_double(tr, "rk4_step", 1e-3, "trajectory");
  cfg.trajectory.mode = opt_string(tr, "mode", "auto", "trajectory");
  if (cfg.trajectory.t1 <= 0.0) throw ConfigError("trajectory.t1 must be positive");
  if (cfg.trajectory.points < 2) throw ConfigError("trajectory.points must be at least 2");
  if (cfg.trajectory.rk4_step <= 0.0) throw ConfigError("trajectory.rk4_step must be positive");
  if (cfg.trajectory.mode != "auto" && cfg.trajectory.mode != "plain" &&
      cfg.trajectory.mode != "explicit_factor" && cfg.trajectory.mode != "reciprocal")
    throw ConfigError("trajectory.mode must be one of auto, plain, explicit_factor, reciprocal");
}

void parse_restriction(const json& doc, RunConfig& cfg) {
  if (!doc.contains("restriction")) return;
  const json& r = doc.at("restriction");
  cfg.restriction.present = true;
  cfg.restriction.chart_box = as_box(need(r, "chart_box", "restriction"), "restriction.chart_box");
  cfg.restriction.base_box = as_box(need(r, "base_box", "restriction"), "restriction.base_box");
  cfg.restriction.param_box = as_box(need(r, "param_box", "restriction"),
                                     "restriction.param_box");
  cfg.restriction.initial_z = opt_double(r, "initial_z", 0.0, "restriction");
}

void parse_output(const json& doc, RunConfig& cfg) {
  if (!doc.contains("output")) return;
  const json& out = doc.at("output");
  const std::string dir = opt_string(out, "directory", "out", "output");
  if (dir.empty()) throw ConfigError("output.directory must not be empty");
  cfg.out_dir = dir;
  const std::string fmt = opt_string(out, "format", "csv", "output");
  if (fmt == "csv")
    cfg.format = TrajectoryFormat::Csv;
  else if (fmt == "json")
    cfg.format = TrajectoryFormat::Json;
  else
    throw ConfigError("output.format must be csv or json");
}

void cross_validate(const RunConfig& cfg) {
  const FamilyDims dims = dims_of(cfg);
  const bool liouville = cfg.system.family == "liouville_sphere";

  bool has_producer = false;
  for (TaskKind kind : cfg.tasks) {
    const std::string name = task_name(kind);
    if (liouville && kind != TaskKind::Verify)
      throw ConfigError("tasks: '" + name + "' is not available for family liouville_sphere");
    if (!liouville && !dims.has_solution)
      throw ConfigError("solution block required for task '" + name + "'");
    if (kind == TaskKind::Reconstruct || kind == TaskKind::Integrate) has_producer = true;
    if (kind == TaskKind::Compare && !has_producer)
      throw ConfigError("tasks: compare requires a preceding reconstruct or integrate task");
  }

  const TrajectoryConfig& tr = cfg.trajectory;
  auto check_family_start = [&](const std::string& task) {
    if (!tr.start_base || !tr.lambda)
      throw ConfigError("trajectory.start_base and trajectory.lambda required for task '" +
                        task + "'");
    if (tr.start_base->size() != dims.base)
      throw ConfigError("trajectory.start_base must have " + std::to_string(dims.base) +
                        " entries");
    if (tr.lambda->size() != dims.params)
      throw ConfigError("trajectory.lambda must have " + std::to_string(dims.params) +
                        " entries");
  };

  for (TaskKind kind : cfg.tasks) {
    if (kind == TaskKind::Reconstruct) {
      check_family_start("reconstruct");
      if (tr.mode == "explicit_factor" && cfg.system.family == "raw" &&
          cfg.system.factor_text.empty())
        throw ConfigError("trajectory.mode explicit_factor needs a conformal factor (system.g)");
      if (tr.mode == "explicit_factor" && cfg.system.family == "damped_oscillator")
        throw ConfigError(
            "trajectory.mode explicit_factor is not available for the oscillator family");
    }
    if (kind == TaskKind::Integrate) {
      if (tr.start_state) {
        if (tr.start_state->size() != 2 * dims.n + 1)
          throw ConfigError("trajectory.start_state must have " +
                            std::to_string(2 * dims.n + 1) + " entries");
      } else {
        check_family_start("integrate");
      }
    }
    if (kind == TaskKind::FirstIntegrals && (tr.start_base || tr.lambda))
      check_family_start("first-integrals");
  }

  if (cfg.restriction.present) {
    if (cfg.restriction.chart_box.dim() != 2 * dims.n)
      throw ConfigError("restriction.chart_box must have dimension " +
                        std::to_string(2 * dims.n));
    if (cfg.restriction.base_box.dim() != dims.base)
      throw ConfigError("restriction.base_box must have dimension " + std::to_string(dims.base));
    if (cfg.restriction.param_box.dim() != dims.params)
      throw ConfigError("restriction.param_box must have dimension " +
                        std::to_string(dims.params));
  }
}

RunConfig parse_config(const json& doc, const std::filesystem::path& source) {
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  RunConfig cfg;
  cfg.source = source;
  if (doc.contains("seed")) {
    const int seed = as_int(doc.at("seed"), "seed");
    if (seed < 0) throw ConfigError("seed must be non-negative");
    cfg.seed = static_cast<std::uint64_t>(seed);
  }
  parse_tolerances(doc, cfg);
  parse_system(doc, cfg);
  parse_solution(doc, cfg);

  const json& tasks = need(doc, "tasks", "config");
  if (!tasks.is_array() || tasks.empty())
    throw ConfigError("config.tasks must be a non-empty array");
  for (const json& item : tasks) {
    const TaskKind kind = task_from_name(as_string(item, "tasks entry"));
    for (TaskKind seen : cfg.tasks)
      if (seen == kind) throw ConfigError("tasks: duplicate task '" + task_name(kind) + "'");
    cfg.tasks.push_back(kind);
  }

  parse_trajectory(doc, cfg);
  parse_restriction(doc, cfg);
  parse_output(doc, cfg);
  cross_validate(cfg);
  return cfg;
}

// ---------------------------------------------------------------- artifacts

void format_double(std::string& line, double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  line += buf;
}

std::vector<std::string> trajectory_columns(int n) {
  std::vector<std::string> cols = {"t"};
  for (int i = 1; i <= n; ++i) cols.push_back("x" + std::to_string(i));
  for (int i = 1; i <= n; ++i) cols.push_back("y" + std::to_string(i));
  cols.push_back("z");
  return cols;
}

void export_csv(const Trajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const int dim = traj.states.empty() ? 0 : static_cast<int>(traj.states.front().size());
  const int n = (dim - 1) / 2;
  std::string line;
  const std::vector<std::string> cols = trajectory_columns(n);
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) line += ',';
    line += cols[i];
  }
  out << line << '\n';
  for (int row = 0; row < traj.size(); ++row) {
    line.clear();
    format_double(line, traj.times[row]);
    for (int c = 0; c < dim; ++c) {
      line += ',';
      format_double(line, traj.states[row][c]);
    }
    out << line << '\n';
  }
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Trajectory import_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": missing header");
  const int columns = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
  if (columns < 4 || columns % 2 != 0)
    throw std::runtime_error(path.string() + ": header is not t,x1..xn,y1..yn,z");
  Trajectory traj;
  traj.method = "imported";
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Eigen::VectorXd state(columns - 1);
    const char* cursor = line.c_str();
    for (int c = 0; c < columns; ++c) {
      char* end = nullptr;
      const double value = std::strtod(cursor, &end);
      if (end == cursor) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
      cursor = end;
      if (c + 1 < columns) {
        if (*cursor != ',')
          throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
        ++cursor;
      }
      if (c == 0)
        traj.times.push_back(value);
      else
        state[c - 1] = value;
    }
    traj.states.push_back(state);
  }
  return traj;
}

void export_json(const Trajectory& traj, const std::filesystem::path& path) {
  const int dim = traj.states.empty() ? 0 : static_cast<int>(traj.states.front().size());
  const int n = (dim - 1) / 2;
  json doc;
  doc["meta"]["n"] = n;
  doc["meta"]["method"] = traj.method;
  doc["meta"]["columns"] = trajectory_columns(n);
  doc["t"] = traj.times;
  json points = json::array();
  for (const Eigen::VectorXd& state : traj.states) {
    json row = json::array();
    for (int c = 0; c < state.size(); ++c) row.push_back(state[c]);
    points.push_back(std::move(row));
  }
  doc["points"] = std::move(points);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Trajectory import_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  Trajectory traj;
  traj.method = doc.contains("meta") && doc["meta"].contains("method")
                    ? doc["meta"]["method"].get<std::string>()
                    : "imported";
  traj.times = doc.at("t").get<std::vector<double>>();
  for (const json& row : doc.at("points")) {
    Eigen::VectorXd state(static_cast<int>(row.size()));
    int c = 0;
    for (const json& value : row) state[c++] = value.get<double>();
    traj.states.push_back(state);
  }
  if (traj.times.size() != traj.states.size())
    throw std::runtime_error(path.string() + ": t and points lengths differ");
  return traj;
}

// ---------------------------------------------------------------- run context

struct BuiltContext {
  std::optional<ContactSystem> system;
  std::optional<CompleteSolution> solution;
  FieldPtr factor;  // certified conformal factor, when the family carries one
  bool factor_certified = false;
  std::optional<ThermoFamily> thermo;
  std::optional<OscillatorFamily> oscillator;
};

BuiltContext build_context(const RunConfig& cfg) {
  BuiltContext ctx;
  const std::string& family = cfg.system.family;
  if (family == "liouville_sphere") return ctx;

  if (family == "thermo") {
    ctx.thermo = build_thermo_family(cfg.system.thermo);
    ctx.system = ctx.thermo->system;
    ctx.solution = ctx.thermo->solution;
    ctx.factor = ctx.thermo->factor;
    ctx.factor_certified = cfg.system.thermo.a0 != 0.0;
    return ctx;
  }
  if (family == "damped_oscillator") {
    ctx.oscillator = build_damped_oscillator(cfg.system.oscillator);
    ctx.system = ctx.oscillator->system;
    ctx.solution = ctx.oscillator->solution;
    return ctx;
  }

  const int n = cfg.system.n;
  const FieldPtr hamiltonian = make_expr_field(cfg.system.hamiltonian_text, phase_names(n));
  if (!cfg.system.factor_text.empty()) {
    ctx.factor = make_expr_field(cfg.system.factor_text, phase_names(n));
    ctx.factor_certified = true;
  }
  if (cfg.system.form == "scaled")
    ctx.system = ContactSystem::scaled(n, hamiltonian, ctx.factor);
  else if (cfg.system.form == "reciprocal")
    ctx.system = ContactSystem::reciprocal_rescaling(n, hamiltonian);
  else
    ctx.system = ContactSystem::darboux(n, hamiltonian);

  if (cfg.solution.present) {
    const Fibration fib = fibration_from(cfg.solution.fibration, n);
    std::vector<std::string> vars = fibration_base_names(fib);
    for (const std::string& name : param_names(fib.dim_fiber())) vars.push_back(name);
    std::vector<FieldPtr> components;
    for (const std::string& text : cfg.solution.components)
      components.push_back(make_expr_field(text, vars));
    ctx.solution = CompleteSolution(fib, cfg.solution.base_box, cfg.solution.param_box,
                                    std::move(components));
  }
  return ctx;
}

// ---------------------------------------------------------------- tasks

std::vector<double> make_time_grid(double t1, int points) {
  std::vector<double> times(points);
  for (int i = 0; i < points; ++i) times[i] = t1 * static_cast<double>(i) / (points - 1);
  return times;
}

std::string format_residual(double value) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << value;
  return os.str();
}

struct ProducedTrajectory {
  Trajectory trajectory;
  std::filesystem::path path;
  Eigen::VectorXd start;
  double t1 = 0.0;
  std::string producer;
};

void run_verify(const RunConfig& cfg, const BuiltContext& ctx, TaskOutcome& out) {
  if (cfg.system.family == "liouville_sphere") {
    LiouvilleSpec spec = cfg.system.liouville;
    spec.seed = cfg.seed;
    const LiouvilleReport rep = liouville_restriction_check(spec);
    out.residuals = {{"max_radial_defect", rep.max_radial_defect},
                     {"max_reeb_defect", rep.max_reeb_defect},
                     {"max_equation_residual", rep.max_equation_residual},
                     {"max_identity_residual", rep.max_identity_residual},
                     {"min_delta_h", rep.min_delta_h},
                     {"samples_used", static_cast<double>(rep.samples_used)}};
    const double worst =
        std::max({rep.max_radial_defect, rep.max_reeb_defect, rep.max_equation_residual});
    if (worst < cfg.tolerances.verify) {
      out.status = "pass";
    } else {
      out.status = "fail";
      out.message = "restriction residual " + format_residual(worst) + " exceeds tolerance " +
                    format_residual(cfg.tolerances.verify);
    }
    return;
  }

  SolutionCheckOptions opt;
  opt.base_samples = cfg.solution.base_samples;
  opt.param_samples = cfg.solution.param_samples;
  opt.seed = cfg.seed;
  opt.tolerance = cfg.tolerances.verify;
  const SolutionCheckReport rep = complete_solution_check(*ctx.solution, *ctx.system, opt);
  out.residuals = {{"min_abs_det", rep.min_abs_det},
                   {"max_hje", rep.max_hje},
                   {"max_one_form", rep.max_one_form},
                   {"max_pairing", rep.max_pairing}};

  // The isotropy side: the plain pulled-back differential for reference
  // presentations, the rescaled pair plus the rate equation when a certified
  // factor is in play.
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  double isotropy = 0.0;
  double rate = 0.0;
  const int samples = std::max(8, cfg.solution.param_samples * 4);
  for (int s = 0; s < samples; ++s) {
    const Eigen::VectorXd x = ctx.solution->base_box.sample(rng);
    const Eigen::VectorXd l = ctx.solution->param_box.sample(rng);
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    const std::span<const double> ls(l.data(), static_cast<std::size_t>(l.size()));
    if (ctx.factor_certified && ctx.factor) {
      const GPseudoIsotropyResidual r =
          g_pseudo_isotropy_residual(*ctx.solution, *ctx.system, ctx.factor, ls, xs);
      isotropy = std::max(isotropy, r.form);
      rate = std::max(rate, r.rate);
    } else {
      isotropy = std::max(isotropy, pseudo_isotropy_residual(*ctx.solution, ls, xs));
    }
  }
  if (ctx.factor_certified && ctx.factor) {
    out.residuals.emplace_back("max_rescaled_isotropy", isotropy);
    out.residuals.emplace_back("max_rate_equation", rate);
  } else {
    out.residuals.emplace_back("max_pseudo_isotropy", isotropy);
  }

  const double worst_isotropy = std::max(isotropy, rate);
  if (rep.passed && worst_isotropy < cfg.tolerances.verify) {
    out.status = "pass";
  } else {
    out.status = "fail";
    out.message = !rep.passed ? rep.failure
                              : "pseudo-isotropy residual " + format_residual(worst_isotropy) +
                                    " exceeds tolerance " +
                                    format_residual(cfg.tolerances.verify);
  }
}

std::string resolve_mode(const RunConfig& cfg, const BuiltContext& ctx) {
  if (cfg.trajectory.mode != "auto") return cfg.trajectory.mode;
  if (ctx.thermo && cfg.system.thermo.a0 != 0.0) return "explicit_factor";
  if (ctx.oscillator) return "reciprocal";
  return "plain";
}

void run_reconstruct(const RunConfig& cfg, const BuiltContext& ctx, TaskOutcome& out,
                     std::optional<ProducedTrajectory>& artifact) {
  const TrajectoryConfig& tr = cfg.trajectory;
  const Eigen::VectorXd& base = *tr.start_base;
  const Eigen::VectorXd& lambda = *tr.lambda;
  const std::span<const double> bs(base.data(), static_cast<std::size_t>(base.size()));
  const std::span<const double> ls(lambda.data(), static_cast<std::size_t>(lambda.size()));
  const std::vector<double> times = make_time_grid(tr.t1, tr.points);

  TablesConfig tables;
  tables.quadrature_tolerance = cfg.tolerances.quadrature;
  tables.seed = cfg.seed;
  ReconstructOptions solve;
  solve.residual_accept = cfg.tolerances.solver;

  const std::string mode = resolve_mode(cfg, ctx);
  Trajectory traj;
  if (mode == "plain") {
    ReconstructionTables built = build_W(*ctx.solution, *ctx.system, tables);
    build_phi(built);
    build_h(built);
    traj = reconstruct_trajectory(built, ls, bs, times, solve);
  } else if (mode == "explicit_factor") {
    if (!ctx.factor) throw std::runtime_error("no conformal factor available for this family");
    traj = reconstruct_rescaled(*ctx.system, *ctx.solution, RescaleMode::explicit_factor(ctx.factor),
                                ls, bs, times, tables, solve);
  } else {
    traj = reconstruct_rescaled(*ctx.system, *ctx.solution, RescaleMode::reciprocal(), ls, bs,
                                times, tables, solve);
  }

  const char* ext = cfg.format == TrajectoryFormat::Csv ? ".csv" : ".json";
  const std::filesystem::path path = cfg.out_dir / (std::string("reconstruct") + ext);
  export_trajectory(traj, path, cfg.format);
  out.trajectory_path = path.string();
  out.message = "mode: " + mode;
  out.status = "pass";
  artifact = ProducedTrajectory{std::move(traj), path, ctx.solution->value(bs, ls), tr.t1,
                                "reconstruct"};
}

std::string region_name(FlowRegion region) {
  switch (region) {
    case FlowRegion::ZeroLevel:
      return "zero-level";
    case FlowRegion::NonzeroLevel:
      return "nonzero-level";
    case FlowRegion::FrozenRate:
      return "frozen-rate";
  }
  return "unknown";
}

void run_integrate(const RunConfig& cfg, const BuiltContext& ctx, TaskOutcome& out,
                   std::optional<ProducedTrajectory>& artifact) {
  const TrajectoryConfig& tr = cfg.trajectory;
  Eigen::VectorXd start;
  if (tr.start_state) {
    start = *tr.start_state;
  } else {
    const Eigen::VectorXd& base = *tr.start_base;
    const Eigen::VectorXd& lambda = *tr.lambda;
    start = ctx.solution->value(std::span<const double>(base.data(), base.size()),
                                std::span<const double>(lambda.data(), lambda.size()));
  }

  std::optional<RestrictedSolution> restriction;
  if (cfg.restriction.present) {
    LevelChartConfig chart_cfg;
    chart_cfg.initial_z = cfg.restriction.initial_z;
    chart_cfg.seed = cfg.seed;
    const LevelSetChart chart = build_level_chart(*ctx.system, cfg.restriction.chart_box,
                                                  chart_cfg);
    RestrictionConfig restrict_cfg;
    restrict_cfg.seed = cfg.seed;
    restriction = restrict_solution(*ctx.solution, chart, cfg.restriction.base_box,
                                    cfg.restriction.param_box, restrict_cfg);
  }

  SplitOptions opt;
  opt.region.level_tolerance = cfg.tolerances.classification;
  opt.region.rate_tolerance = cfg.tolerances.classification;
  opt.tables.quadrature_tolerance = cfg.tolerances.quadrature;
  opt.tables.seed = cfg.seed;
  opt.solve.residual_accept = cfg.tolerances.solver;
  opt.zero_level.quadrature_tolerance = cfg.tolerances.quadrature;

  const std::vector<double> times = make_time_grid(tr.t1, tr.points);
  SplitResult result = split_and_integrate(
      *ctx.system, *ctx.solution, restriction,
      std::span<const double>(start.data(), static_cast<std::size_t>(start.size())), times, opt);

  const char* ext = cfg.format == TrajectoryFormat::Csv ? ".csv" : ".json";
  const std::filesystem::path path = cfg.out_dir / (std::string("integrate") + ext);
  export_trajectory(result.trajectory, path, cfg.format);
  out.trajectory_path = path.string();
  out.message = "region: " + region_name(result.region);
  out.status = "pass";
  artifact = ProducedTrajectory{std::move(result.trajectory), path, start, tr.t1, "integrate"};
}

void run_compare(const RunConfig& cfg, const BuiltContext& ctx, TaskOutcome& out,
                 const ProducedTrajectory& artifact) {
  const Trajectory from_file = load_trajectory(artifact.path);
  Rk4Options rk4;
  rk4.step = cfg.trajectory.rk4_step;
  const Trajectory oracle =
      integrate_contact_rk4(*ctx.system, artifact.start, 0.0, artifact.t1, rk4);

  auto deviation = [&](const Trajectory& traj) {
    double worst = 0.0;
    for (int i = 0; i < traj.size(); ++i) {
      const Eigen::VectorXd truth = interpolate_state(oracle, traj.times[i]);
      worst = std::max(worst, (traj.states[i] - truth).cwiseAbs().maxCoeff());
    }
    return worst;
  };

  double roundtrip = 0.0;
  if (from_file.size() != artifact.trajectory.size()) {
    roundtrip = std::numeric_limits<double>::infinity();
  } else {
    for (int i = 0; i < from_file.size(); ++i) {
      roundtrip = std::max(roundtrip,
                           std::abs(from_file.times[i] - artifact.trajectory.times[i]));
      roundtrip = std::max(
          roundtrip,
          (from_file.states[i] - artifact.trajectory.states[i]).cwiseAbs().maxCoeff());
    }
  }

  const double mem_dev = deviation(artifact.trajectory);
  const double file_dev = deviation(from_file);
  out.residuals = {{"max_abs_error", mem_dev},
                   {"max_abs_error_from_file", file_dev},
                   {"file_roundtrip", roundtrip}};
  out.message = "against: " + artifact.producer;
  if (mem_dev < cfg.tolerances.compare && file_dev < cfg.tolerances.compare && roundtrip == 0.0) {
    out.status = "pass";
  } else {
    out.status = "fail";
    out.message = "deviation " + format_residual(std::max(mem_dev, file_dev)) +
                  " against the reference trajectory (tolerance " +
                  format_residual(cfg.tolerances.compare) + ")";
  }
}

void run_first_integrals(const RunConfig& cfg, const BuiltContext& ctx, TaskOutcome& out) {
  const CompleteSolution& sol = *ctx.solution;
  std::mt19937_64 rng(cfg.seed + 1);
  double roundtrip = 0.0;
  for (int s = 0; s < 40; ++s) {
    const Eigen::VectorXd x = sol.base_box.sample(rng);
    const Eigen::VectorXd l = sol.param_box.sample(rng);
    const Eigen::VectorXd point = sol.value(std::span<const double>(x.data(), x.size()),
                                            std::span<const double>(l.data(), l.size()));
    InversionOptions inv;
    Eigen::VectorXd warm(x.size() + l.size());
    warm << x, l;
    inv.initial = warm;
    const Eigen::VectorXd values = first_integrals_from_solution(
        sol, std::span<const double>(point.data(), point.size()), inv);
    roundtrip = std::max(roundtrip, (values - l).cwiseAbs().maxCoeff());
  }

  const Eigen::VectorXd base =
      cfg.trajectory.start_base ? *cfg.trajectory.start_base : sol.base_box.midpoint();
  const Eigen::VectorXd lambda =
      cfg.trajectory.lambda ? *cfg.trajectory.lambda : sol.param_box.midpoint();
  const Eigen::VectorXd start = sol.value(std::span<const double>(base.data(), base.size()),
                                          std::span<const double>(lambda.data(), lambda.size()));
  Rk4Options rk4;
  rk4.step = cfg.trajectory.rk4_step;
  const Trajectory traj =
      integrate_contact_rk4(*ctx.system, start, 0.0, cfg.trajectory.t1, rk4);

  double drift = 0.0;
  Eigen::VectorXd warm(base.size() + lambda.size());
  warm << base, lambda;
  const int stride = std::max(1, traj.size() / 100);
  for (int i = 0; i < traj.size(); i += stride) {
    InversionOptions inv;
    inv.initial = warm;
    const SolutionInverse inverse = invert_solution(
        sol, std::span<const double>(traj.states[i].data(), traj.states[i].size()), inv);
    drift = std::max(drift, (inverse.lambda - lambda).cwiseAbs().maxCoeff());
    warm << inverse.base, inverse.lambda;
  }

  out.residuals = {{"max_roundtrip", roundtrip}, {"max_drift", drift}};
  if (roundtrip < cfg.tolerances.verify && drift < cfg.tolerances.compare) {
    out.status = "pass";
  } else {
    out.status = "fail";
    out.message = "first integrals drift " + format_residual(drift) + ", roundtrip " +
                  format_residual(roundtrip);
  }
}

}  // namespace

// ---------------------------------------------------------------- public API

void validate_config(const RunConfig& config) { cross_validate(config); }

std::string task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::Verify:
      return "verify";
    case TaskKind::Reconstruct:
      return "reconstruct";
    case TaskKind::Integrate:
      return "integrate";
    case TaskKind::Compare:
      return "compare";
    case TaskKind::FirstIntegrals:
      return "first-integrals";
  }
  return "unknown";
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse_config(doc, path);
}

RunConfig load_config_text(const std::string& text, const std::filesystem::path& source_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  RunConfig cfg = parse_config(doc, source_dir / "<memory>");
  cfg.out_dir = source_dir / cfg.out_dir;
  return cfg;
}

void export_trajectory(const Trajectory& traj, const std::filesystem::path& path,
                       TrajectoryFormat format) {
  if (format == TrajectoryFormat::Csv)
    export_csv(traj, path);
  else
    export_json(traj, path);
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  return path.extension() == ".json" ? import_json(path) : import_csv(path);
}

std::string report_json(const RunReport& report) {
  json doc;
  doc["config"] = report.config_source.string();
  doc["seed"] = report.seed;
  doc["exit_code"] = report.exit_code;
  json tasks = json::array();
  for (const TaskOutcome& task : report.tasks) {
    json entry;
    entry["name"] = task.name;
    entry["status"] = task.status;
    entry["wall_ms"] = task.wall_ms;
    if (!task.message.empty()) entry["message"] = task.message;
    if (!task.trajectory_path.empty()) entry["trajectory"] = task.trajectory_path;
    if (!task.residuals.empty()) {
      json residuals;
      for (const auto& [name, value] : task.residuals) residuals[name] = value;
      entry["residuals"] = std::move(residuals);
    }
    tasks.push_back(std::move(entry));
  }
  doc["tasks"] = std::move(tasks);
  return doc.dump(2);
}

RunReport run(const RunConfig& cfg) {
  RunReport report;
  report.config_source = cfg.source;
  report.seed = cfg.seed;
  std::filesystem::create_directories(cfg.out_dir);

  std::optional<BuiltContext> ctx;
  std::string build_error;
  try {
    ctx = build_context(cfg);
  } catch (const std::exception& e) {
    build_error = e.what();
  }

  bool verify_blocked = false;  // a failed verify poisons everything downstream
  std::optional<ProducedTrajectory> artifact;
  bool producer_failed = false;

  for (std::size_t index = 0; index < cfg.tasks.size(); ++index) {
    const TaskKind kind = cfg.tasks[index];
    TaskOutcome out;
    out.name = task_name(kind);

    if (!ctx) {
      if (index == 0) {
        out.status = "error";
        out.message = build_error;
      } else {
        out.status = "skipped";
        out.message = "skipped: system construction failed";
      }
      report.tasks.push_back(std::move(out));
      continue;
    }
    if (verify_blocked) {
      out.status = "skipped";
      out.message = "skipped: verify did not pass";
      report.tasks.push_back(std::move(out));
      continue;
    }
    if (kind == TaskKind::Compare && !artifact) {
      out.status = "skipped";
      out.message = producer_failed ? "skipped: the producing task failed"
                                    : "skipped: no trajectory was produced";
      report.tasks.push_back(std::move(out));
      continue;
    }

    const auto started = std::chrono::steady_clock::now();
    try {
      switch (kind) {
        case TaskKind::Verify:
          run_verify(cfg, *ctx, out);
          break;
        case TaskKind::Reconstruct:
          run_reconstruct(cfg, *ctx, out, artifact);
          break;
        case TaskKind::Integrate:
          run_integrate(cfg, *ctx, out, artifact);
          break;
        case TaskKind::Compare:
          run_compare(cfg, *ctx, out, *artifact);
          break;
        case TaskKind::FirstIntegrals:
          run_first_integrals(cfg, *ctx, out);
          break;
      }
    } catch (const std::exception& e) {
      out.status = "error";
      out.message = e.what();
    }
    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            started)
                      .count();

    if (kind == TaskKind::Verify && out.status != "pass") verify_blocked = true;
    if ((kind == TaskKind::Reconstruct || kind == TaskKind::Integrate) && out.status != "pass")
      producer_failed = true;
    report.tasks.push_back(std::move(out));
  }

  bool any_error = false;
  bool any_fail = false;
  for (const TaskOutcome& task : report.tasks) {
    if (task.status == "error") any_error = true;
    if (task.status == "fail") any_fail = true;
  }
  report.exit_code = any_error ? 3 : (any_fail ? 1 : 0);

  const std::filesystem::path report_path = cfg.out_dir / "report.json";
  std::ofstream out(report_path);
  out << report_json(report) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + report_path.string());
  return report;
}

}  // namespace cq
