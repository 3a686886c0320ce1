#pragma once

// Experiment configuration, seeded parallel Monte Carlo orchestration and
// artifact emission. Runs are independent tasks with per-run RNG streams
// derived from the master seed; aggregation happens in run-index order,
// so results are byte-identical for any worker count.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "swsysid/analysis.hpp"
#include "swsysid/estimator.hpp"
#include "swsysid/model.hpp"

namespace swsysid {

struct ExperimentOptions {
  double ridge = 0.0;
  std::vector<double> quantiles{0.25, 0.5, 0.75};
};

struct ExperimentConfig {
  SwitchedSystem system;
  NoiseModel noise;
  long horizon = 0;
  std::vector<long> checkpoints;  // strictly increasing, within [1, horizon]
  int runs = 30;
  std::uint64_t master_seed = 0;
  std::string output_dir;  // empty: resolved by the CLI (flag, env, cwd)
  ExperimentOptions options;

  ExperimentConfig(SwitchedSystem sys, NoiseModel noise_model, long horizon_steps);

  void validate() const;

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig from_file(const std::filesystem::path& path);

  // Canonical serialization; equal configs hash equally.
  std::string canonical_json() const;
  std::uint64_t hash() const;
};

// Dyadic grid 128, 256, ... up to horizon, horizon appended when it is
// not itself on the grid. Horizons below 128 get just {horizon}.
std::vector<long> default_checkpoints(long horizon);

// Stable per-run seed: splitmix64 evaluated at master_seed + (run+1) * gamma.
std::uint64_t derive_run_seed(std::uint64_t master_seed, std::uint64_t run_index);

struct StabilityReport {
  double assumption2_margin = 0.0;
  double mss_radius = 0.0;
  bool assumption2_holds = false;
  bool mss_holds = false;
  std::string classification;
  std::vector<double> average_energy_quantiles;  // filled by run_experiment
};

StabilityReport stability_report(const SwitchedSystem& sys);
std::string stability_report_json(const StabilityReport& report, int indent = 2);

// Per-(checkpoint, mode) samples across completed runs, in run order.
struct MetricSamples {
  std::vector<double> error_inf;
  std::vector<double> dd_bound;
  std::vector<double> di_visits;
  std::vector<double> di_pmf;
  std::vector<double> lambda_min;
  std::vector<double> lambda_max;
  std::vector<double> visits;
};

struct QuantileCurvePoint {
  long horizon = 0;
  int mode = 0;  // 1-based
  double quantile = 0.0;
  double error_inf = 0.0;
  double dd_bound = 0.0;
  double di_visits = 0.0;
  double di_pmf = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double visits = 0.0;
};

struct ExperimentResult {
  std::vector<long> checkpoints;
  int modes = 0;
  long horizon = 0;
  int runs = 0;
  std::vector<double> quantiles;
  std::vector<std::vector<MetricSamples>> samples;  // [checkpoint][mode]
  std::vector<QuantileCurvePoint> curves;           // sorted (T, mode, quantile)
  std::vector<RateFit> rate_fits;                   // one per mode (NaN if not fittable)
  StabilityReport stability;
  std::vector<double> average_energy_samples;
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> run_seeds;
  std::vector<int> diverged_runs;
  std::uint64_t config_hash = 0;

  // Median error across runs at each checkpoint for one 0-based mode.
  std::vector<double> median_errors(int mode) const;
};

// Simulates, feeds the streaming estimator and snapshots bounds at every
// checkpoint, for config.runs independent runs. workers = 0 uses all
// hardware threads. Throws InstabilityError when more than 20% of runs
// diverge.
ExperimentResult run_experiment(const ExperimentConfig& config, int workers = 0);

struct ArtifactFile {
  std::string path;
  std::uint64_t content_hash = 0;  // fnv1a64 over the bytes written
  std::uintmax_t bytes = 0;
};

struct Manifest {
  std::vector<ArtifactFile> files;
};

std::string manifest_json(const Manifest& manifest, int indent = 2);

// Writes curves.csv, fig1_data.csv, summary.json and plot_fig1.py under
// dir (created if needed) and returns the manifest.
Manifest emit_artifacts(const ExperimentResult& result,
                        const std::filesystem::path& dir);

// Oracle-backed example suite shared by the CLI and the test harness;
// prints one line per check, returns the number of failures.
int run_selftest(std::ostream& out);

}  // namespace swsysid
