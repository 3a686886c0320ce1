// swsysid command line: simulate trajectories, fit estimates, report
// stability, run seeded Monte Carlo experiments and the worked-example
// selftest. Exit codes: 0 ok, 1 validation error, 2 instability, 3 IO.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "swsysid/analysis.hpp"
#include "swsysid/estimator.hpp"
#include "swsysid/harness.hpp"
#include "swsysid/model.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitInstability = 2;
constexpr int kExitIo = 3;

std::string resolve_out_dir(const std::string& flag_value,
                            const std::string& config_value) {
  if (!flag_value.empty()) return flag_value;
  if (!config_value.empty()) return config_value;
  if (const char* env = std::getenv("SWSYSID_OUT"); env && *env) return env;
  return ".";
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw swsysid::IoError("cannot open for writing: " + path.string());
  out << text;
  out.flush();
  if (!out) throw swsysid::IoError("write failed: " + path.string());
}

struct CommonFlags {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  int workers = 0;
};

int cmd_simulate(const CommonFlags& flags, std::optional<long> horizon_override) {
  swsysid::ExperimentConfig config = swsysid::ExperimentConfig::from_file(flags.config_path);
  const long horizon = horizon_override.value_or(config.horizon);
  const std::uint64_t seed = flags.seed.value_or(config.master_seed);
  const swsysid::Trajectory traj =
      simulate(config.system, config.noise, horizon, seed);

  const fs::path out_dir = resolve_out_dir(flags.out, config.output_dir);
  const fs::path path = fs::path(out_dir) / "trajectory.csv";
  std::ostringstream buf;
  swsysid::write_trajectory_csv(traj, buf);
  write_text_file(path, buf.str());
  std::cout << "wrote " << path.string() << " (" << traj.horizon() << " steps, seed "
            << seed << ")\n";
  return kExitOk;
}

int cmd_fit(const std::string& in_path, const std::string& out_path, int modes,
            double ridge, const std::string& method) {
  std::ifstream in(in_path);
  if (!in) throw swsysid::IoError("cannot open trajectory: " + in_path);
  const swsysid::Trajectory traj = swsysid::read_trajectory_csv(in);

  swsysid::EstimatorState state = [&]() {
    if (method == "batch") return swsysid::batch_fit(traj, modes, ridge);
    if (method != "recursive") {
      throw swsysid::InvalidInputError("fit: method must be batch or recursive");
    }
    int k = modes;
    if (k == 0) {
      for (int s : traj.switches) k = std::max(k, s + 1);
    }
    swsysid::EstimatorState streaming(traj.state_dim(), k, ridge);
    for (long t = 0; t < traj.horizon(); ++t) {
      streaming.step(traj.states.col(t), traj.switches[static_cast<size_t>(t)],
                     traj.states.col(t + 1));
    }
    return streaming;
  }();

  write_text_file(out_path, swsysid::estimate_json(state) + "\n");
  std::cout << "wrote " << out_path << " (t=" << state.time() << ", k="
            << state.mode_count() << ", " << method << ")\n";
  return kExitOk;
}

int cmd_stability(const CommonFlags& flags) {
  const swsysid::ExperimentConfig config =
      swsysid::ExperimentConfig::from_file(flags.config_path);
  const swsysid::StabilityReport report = swsysid::stability_report(config.system);
  const std::string text = swsysid::stability_report_json(report) + "\n";
  if (!flags.out.empty()) {
    write_text_file(flags.out, text);
    std::cout << "wrote " << flags.out << "\n";
  } else {
    std::cout << text;
  }
  return kExitOk;
}

int cmd_montecarlo(const CommonFlags& flags) {
  swsysid::ExperimentConfig config =
      swsysid::ExperimentConfig::from_file(flags.config_path);
  if (flags.seed) config.master_seed = *flags.seed;
  if (flags.runs) config.runs = *flags.runs;
  config.validate();

  const swsysid::ExperimentResult result =
      swsysid::run_experiment(config, flags.workers);
  const fs::path out_dir = resolve_out_dir(flags.out, config.output_dir);
  const swsysid::Manifest manifest = swsysid::emit_artifacts(result, out_dir);
  std::cout << swsysid::manifest_json(manifest) << "\n";
  if (!result.diverged_runs.empty()) {
    std::cout << "note: " << result.diverged_runs.size() << " of " << result.runs
              << " runs diverged\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"switched linear system identification toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::optional<long> horizon_override;

  auto* sim = app.add_subcommand("simulate", "simulate one trajectory to CSV");
  sim->add_option("--config", flags.config_path, "experiment config (JSON)")
      ->required();
  sim->add_option("--seed", flags.seed, "override the RNG seed");
  sim->add_option("--horizon", horizon_override, "override the horizon");
  sim->add_option("--out", flags.out, "output directory");

  std::string fit_in, fit_out = "estimate.json", fit_method = "batch";
  int fit_modes = 0;
  double fit_ridge = 0.0;
  auto* fit = app.add_subcommand("fit", "fit mode estimates from a trajectory CSV");
  fit->add_option("--in", fit_in, "trajectory CSV")->required();
  fit->add_option("--out", fit_out, "estimate JSON path");
  fit->add_option("--modes", fit_modes, "mode count (default: inferred)");
  fit->add_option("--ridge", fit_ridge, "ridge regularization (default off)");
  fit->add_option("--method", fit_method, "batch or recursive");

  auto* stab = app.add_subcommand("stability", "stability diagnostics for a config");
  stab->add_option("--config", flags.config_path, "experiment config (JSON)")
      ->required();
  stab->add_option("--out", flags.out, "write the report here instead of stdout");

  auto* mc = app.add_subcommand("montecarlo", "run the full seeded experiment");
  mc->add_option("--config", flags.config_path, "experiment config (JSON)")
      ->required();
  mc->add_option("--seed", flags.seed, "override master_seed");
  mc->add_option("--runs", flags.runs, "override run count");
  mc->add_option("--out", flags.out, "output directory");
  mc->add_option("--workers", flags.workers, "worker threads (default: all cores)");

  auto* self = app.add_subcommand("selftest", "run the worked-example suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (sim->parsed()) return cmd_simulate(flags, horizon_override);
    if (fit->parsed()) return cmd_fit(fit_in, fit_out, fit_modes, fit_ridge, fit_method);
    if (stab->parsed()) return cmd_stability(flags);
    if (mc->parsed()) return cmd_montecarlo(flags);
    if (self->parsed()) {
      return swsysid::run_selftest(std::cout) == 0 ? kExitOk : kExitValidation;
    }
  } catch (const swsysid::InstabilityError& e) {
    std::cerr << "instability: " << e.what() << "\n";
    return kExitInstability;
  } catch (const swsysid::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const swsysid::InvalidInputError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
