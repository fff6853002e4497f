// Command-line front end: loads a JSON run configuration, applies the flag
// overrides, executes the task list, and maps the outcome onto exit codes
// 0 (all tasks passed), 1 (a verification failed), 2 (configuration error),
// 3 (runtime numerical failure).

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "contactq/cli.hpp"

namespace {

int apply_tolerance_overrides(const std::vector<std::string>& overrides, cq::RunConfig& cfg) {
  for (const std::string& text : overrides) {
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "config error: --tolerance expects name=value, got '%s'\n",
                   text.c_str());
      return 2;
    }
    const std::string name = text.substr(0, eq);
    double value = 0.0;
    try {
      value = std::stod(text.substr(eq + 1));
    } catch (const std::exception&) {
      std::fprintf(stderr, "config error: --tolerance %s: value is not a number\n", name.c_str());
      return 2;
    }
    if (value <= 0.0) {
      std::fprintf(stderr, "config error: --tolerance %s must be positive\n", name.c_str());
      return 2;
    }
    if (name == "quadrature")
      cfg.tolerances.quadrature = value;
    else if (name == "solver")
      cfg.tolerances.solver = value;
    else if (name == "classification")
      cfg.tolerances.classification = value;
    else if (name == "verify")
      cfg.tolerances.verify = value;
    else if (name == "compare")
      cfg.tolerances.compare = value;
    else {
      std::fprintf(stderr, "config error: --tolerance %s is not a known tolerance\n",
                   name.c_str());
      return 2;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contact Hamiltonian toolkit batch runner"};
  std::string config_path;
  std::vector<std::string> task_override;
  std::string out_override;
  std::int64_t seed_override = -1;
  std::vector<std::string> tolerance_overrides;

  app.add_option("config", config_path, "JSON run configuration")->required();
  app.add_option("--task", task_override, "override the task list (repeatable)");
  app.add_option("--out", out_override, "override the output directory");
  app.add_option("--seed", seed_override, "override the sampling seed");
  app.add_option("--tolerance", tolerance_overrides,
                 "override a tolerance as name=value (quadrature, solver, classification, "
                 "verify, compare; repeatable)");
  CLI11_PARSE(app, argc, argv);

  cq::RunConfig cfg;
  try {
    cfg = cq::load_config(config_path);
    if (!task_override.empty()) {
      // Re-validate the overridden list through the normal path by rewriting
      // the parsed config; duplicates and unknown names must still fail.
      std::vector<cq::TaskKind> tasks;
      for (const std::string& name : task_override) {
        cq::TaskKind kind;
        if (name == "verify")
          kind = cq::TaskKind::Verify;
        else if (name == "reconstruct")
          kind = cq::TaskKind::Reconstruct;
        else if (name == "integrate")
          kind = cq::TaskKind::Integrate;
        else if (name == "compare")
          kind = cq::TaskKind::Compare;
        else if (name == "first-integrals")
          kind = cq::TaskKind::FirstIntegrals;
        else
          throw cq::ConfigError("tasks: unknown task '" + name + "'");
        for (cq::TaskKind seen : tasks)
          if (seen == kind) throw cq::ConfigError("tasks: duplicate task '" + name + "'");
        tasks.push_back(kind);
      }
      cfg.tasks = std::move(tasks);
    }
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    cq::validate_config(cfg);
  } catch (const cq::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }
  if (const int code = apply_tolerance_overrides(tolerance_overrides, cfg); code != 0)
    return code;

  cq::RunReport report;
  try {
    report = cq::run(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return 3;
  }

  for (const cq::TaskOutcome& task : report.tasks) {
    std::printf("%-15s %-7s %8.1f ms", task.name.c_str(), task.status.c_str(), task.wall_ms);
    if (!task.message.empty()) std::printf("  %s", task.message.c_str());
    std::printf("\n");
    for (const auto& [name, value] : task.residuals)
      std::printf("    %-28s %.3e\n", name.c_str(), value);
  }
  std::printf("report: %s\n", (cfg.out_dir / "report.json").string().c_str());
  return report.exit_code;
}
