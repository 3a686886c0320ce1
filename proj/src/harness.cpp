#include "swsysid/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace swsysid {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

std::string fmt_g17(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double parse_real(const nlohmann::json& v, const char* what) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    try {
      size_t used = 0;
      const std::string s = v.get<std::string>();
      const double d = std::stod(s, &used);
      if (used == s.size()) return d;
    } catch (const std::exception&) {
    }
  }
  throw InvalidInputError(std::string("config: ") + what +
                          " must be a number (or a decimal string)");
}

Mat parse_matrix(const nlohmann::json& rows, const char* what) {
  if (!rows.is_array() || rows.empty()) {
    throw InvalidInputError(std::string("config: ") + what +
                            " must be a non-empty array of rows");
  }
  const size_t nrows = rows.size();
  size_t ncols = 0;
  Mat m;
  for (size_t r = 0; r < nrows; ++r) {
    const auto& row = rows[r];
    if (!row.is_array() || row.empty()) {
      throw InvalidInputError(std::string("config: ") + what +
                              " rows must be non-empty arrays");
    }
    if (r == 0) {
      ncols = row.size();
      m.resize(static_cast<Eigen::Index>(nrows), static_cast<Eigen::Index>(ncols));
    } else if (row.size() != ncols) {
      throw InvalidInputError(std::string("config: ") + what +
                              " rows must have equal length");
    }
    for (size_t c = 0; c < ncols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          parse_real(row[c], what);
    }
  }
  return m;
}

Vec parse_vector(const nlohmann::json& arr, const char* what) {
  if (!arr.is_array() || arr.empty()) {
    throw InvalidInputError(std::string("config: ") + what +
                            " must be a non-empty array");
  }
  Vec v(static_cast<Eigen::Index>(arr.size()));
  for (size_t i = 0; i < arr.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = parse_real(arr[i], what);
  }
  return v;
}

nlohmann::ordered_json matrix_json(const Mat& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

std::uint64_t splitmix64_mix(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

ExperimentConfig::ExperimentConfig(SwitchedSystem sys, NoiseModel noise_model,
                                   long horizon_steps)
    : system(std::move(sys)), noise(std::move(noise_model)), horizon(horizon_steps) {
  checkpoints = default_checkpoints(horizon);
}

void ExperimentConfig::validate() const {
  if (horizon < 1) throw InvalidInputError("config: horizon must be >= 1");
  if (runs < 1) throw InvalidInputError("config: runs must be >= 1");
  if (noise.dim() != system.state_dim()) {
    throw InvalidInputError("config: noise dimension must match the system");
  }
  for (size_t i = 0; i < checkpoints.size(); ++i) {
    if (checkpoints[i] < 1 || checkpoints[i] > horizon) {
      throw InvalidInputError("config: checkpoints must lie in [1, horizon]");
    }
    if (i > 0 && checkpoints[i] <= checkpoints[i - 1]) {
      throw InvalidInputError("config: checkpoints must be strictly increasing");
    }
  }
  if (options.quantiles.empty()) {
    throw InvalidInputError("config: need at least one quantile");
  }
  for (size_t i = 0; i < options.quantiles.size(); ++i) {
    const double q = options.quantiles[i];
    if (!(q > 0.0 && q < 1.0)) {
      throw InvalidInputError("config: quantiles must be in (0, 1)");
    }
    if (i > 0 && q <= options.quantiles[i - 1]) {
      throw InvalidInputError("config: quantiles must be strictly increasing");
    }
  }
  if (options.ridge < 0.0) {
    throw InvalidInputError("config: ridge must be >= 0");
  }
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInputError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("system") || !doc.contains("noise") ||
      !doc.contains("horizon")) {
    throw InvalidInputError("config: needs system, noise and horizon");
  }

  const auto& jsys = doc["system"];
  if (!jsys.contains("modes") || !jsys["modes"].is_array() || jsys["modes"].empty()) {
    throw InvalidInputError("config: system.modes must be a non-empty array");
  }
  std::vector<Mat> modes;
  for (size_t i = 0; i < jsys["modes"].size(); ++i) {
    modes.push_back(parse_matrix(jsys["modes"][i], "system.modes[i]"));
  }
  Vec pmf = parse_vector(jsys.at("switch_pmf"), "system.switch_pmf");
  Vec x0;
  if (jsys.contains("x0")) x0 = parse_vector(jsys["x0"], "system.x0");
  SwitchedSystem system(std::move(modes), std::move(pmf), std::move(x0));

  const auto& jnoise = doc["noise"];
  const NoiseKind kind =
      noise_kind_from_string(jnoise.value("kind", std::string("gaussian_iid")));
  Mat cov = jnoise.contains("covariance")
                ? parse_matrix(jnoise["covariance"], "noise.covariance")
                : Mat(Mat::Identity(system.state_dim(), system.state_dim()));
  NoiseModel noise = [&]() {
    switch (kind) {
      case NoiseKind::GaussianIid:
        return NoiseModel::gaussian(std::move(cov));
      case NoiseKind::StudentTIid:
        return NoiseModel::student_t(std::move(cov),
                                     jnoise.contains("dof")
                                         ? parse_real(jnoise["dof"], "noise.dof")
                                         : 5.0);
      case NoiseKind::ScheduledGaussian: {
        if (!jnoise.contains("schedule") || !jnoise["schedule"].is_array()) {
          throw InvalidInputError("config: scheduled_gaussian needs noise.schedule");
        }
        std::vector<double> schedule;
        for (const auto& s : jnoise["schedule"]) {
          schedule.push_back(parse_real(s, "noise.schedule"));
        }
        return NoiseModel::scheduled_gaussian(std::move(cov), std::move(schedule));
      }
    }
    throw InvalidInputError("config: unknown noise kind");
  }();

  const long horizon = doc["horizon"].get<long>();
  ExperimentConfig config(std::move(system), std::move(noise), horizon);
  if (doc.contains("checkpoints")) {
    config.checkpoints.clear();
    for (const auto& c : doc["checkpoints"]) {
      config.checkpoints.push_back(c.get<long>());
    }
  }
  config.runs = doc.value("runs", 30);
  config.master_seed = doc.value("master_seed", std::uint64_t{0});
  config.output_dir = doc.value("output_dir", std::string());
  if (doc.contains("options")) {
    const auto& jopt = doc["options"];
    if (jopt.contains("ridge")) {
      config.options.ridge = parse_real(jopt["ridge"], "options.ridge");
    }
    if (jopt.contains("quantiles")) {
      config.options.quantiles.clear();
      for (const auto& q : jopt["quantiles"]) {
        config.options.quantiles.push_back(parse_real(q, "options.quantiles"));
      }
    }
  }
  config.validate();
  return config;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open config file: " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string ExperimentConfig::canonical_json() const {
  nlohmann::ordered_json doc;
  nlohmann::ordered_json jsys;
  nlohmann::ordered_json jmodes = nlohmann::ordered_json::array();
  for (const Mat& a : system.modes()) jmodes.push_back(matrix_json(a));
  jsys["modes"] = jmodes;
  nlohmann::ordered_json jpmf = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < system.switch_pmf().size(); ++i) {
    jpmf.push_back(system.switch_pmf()(i));
  }
  jsys["switch_pmf"] = jpmf;
  nlohmann::ordered_json jx0 = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < system.x0().size(); ++i) jx0.push_back(system.x0()(i));
  jsys["x0"] = jx0;
  doc["system"] = jsys;

  nlohmann::ordered_json jnoise;
  jnoise["kind"] = to_string(noise.kind());
  jnoise["covariance"] = matrix_json(noise.covariance());
  if (noise.kind() == NoiseKind::StudentTIid) jnoise["dof"] = noise.dof();
  if (noise.kind() == NoiseKind::ScheduledGaussian) {
    jnoise["schedule"] = noise.schedule();
  }
  doc["noise"] = jnoise;

  doc["horizon"] = horizon;
  doc["checkpoints"] = checkpoints;
  doc["runs"] = runs;
  doc["master_seed"] = master_seed;
  doc["options"]["ridge"] = options.ridge;
  doc["options"]["quantiles"] = options.quantiles;
  return doc.dump();
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(canonical_json()); }

std::vector<long> default_checkpoints(long horizon) {
  std::vector<long> grid;
  for (long c = 128; c <= horizon; c *= 2) grid.push_back(c);
  if (grid.empty() || grid.back() != horizon) grid.push_back(horizon);
  return grid;
}

std::uint64_t derive_run_seed(std::uint64_t master_seed, std::uint64_t run_index) {
  return splitmix64_mix(master_seed + (run_index + 1) * kGoldenGamma);
}

StabilityReport stability_report(const SwitchedSystem& sys) {
  StabilityReport report;
  report.assumption2_margin = assumption2_margin(sys);
  report.mss_radius = mss_radius(sys);
  report.assumption2_holds = report.assumption2_margin < 1.0;
  report.mss_holds = report.mss_radius < 1.0;
  report.classification =
      std::string("assumption2=") + (report.assumption2_holds ? "holds" : "fails") +
      ",mss=" + (report.mss_holds ? "holds" : "fails");
  return report;
}

std::string stability_report_json(const StabilityReport& report, int indent) {
  nlohmann::ordered_json doc;
  doc["assumption2_margin"] = report.assumption2_margin;
  doc["mss_radius"] = report.mss_radius;
  doc["assumption2_holds"] = report.assumption2_holds;
  doc["mss_holds"] = report.mss_holds;
  doc["classification"] = report.classification;
  if (!report.average_energy_quantiles.empty()) {
    doc["average_energy_quantiles"] = report.average_energy_quantiles;
  }
  return doc.dump(indent);
}

namespace {

struct RunOutcome {
  bool diverged = false;
  long diverged_step = -1;
  double average_energy = 0.0;
  // [checkpoint][mode]
  std::vector<std::vector<ModeBounds>> snapshots;
};

RunOutcome execute_run(const ExperimentConfig& config, std::uint64_t seed) {
  RunOutcome outcome;
  Trajectory traj;
  try {
    traj = simulate(config.system, config.noise, config.horizon, seed);
  } catch (const InstabilityError& e) {
    outcome.diverged = true;
    outcome.diverged_step = e.step();
    return outcome;
  }

  EstimatorState state(config.system.state_dim(), config.system.mode_count(),
                       config.options.ridge);
  size_t next = 0;
  for (long t = 0; t < config.horizon && next < config.checkpoints.size(); ++t) {
    state.step(traj.states.col(t), traj.switches[static_cast<size_t>(t)],
               traj.states.col(t + 1));
    if (t + 1 == config.checkpoints[next]) {
      outcome.snapshots.push_back(bounds_report(state, config.system).per_mode);
      ++next;
    }
  }
  outcome.average_energy = average_energy(traj);
  return outcome;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, int workers) {
  config.validate();
  const int k = config.system.mode_count();
  const int runs = config.runs;

  ExperimentResult result;
  result.checkpoints = config.checkpoints;
  result.modes = k;
  result.horizon = config.horizon;
  result.runs = runs;
  result.quantiles = config.options.quantiles;
  result.master_seed = config.master_seed;
  result.config_hash = config.hash();
  for (int r = 0; r < runs; ++r) {
    result.run_seeds.push_back(
        derive_run_seed(config.master_seed, static_cast<std::uint64_t>(r)));
  }

  // Independent runs; any scheduling of them produces the same outcome
  // slots, and aggregation below walks the slots in run order.
  std::vector<RunOutcome> outcomes(static_cast<size_t>(runs));
  int thread_count = workers > 0
                         ? workers
                         : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  thread_count = std::min(thread_count, runs);
  std::atomic<int> cursor{0};
  auto worker_loop = [&]() {
    for (int r = cursor.fetch_add(1); r < runs; r = cursor.fetch_add(1)) {
      outcomes[static_cast<size_t>(r)] =
          execute_run(config, result.run_seeds[static_cast<size_t>(r)]);
    }
  };
  if (thread_count <= 1) {
    worker_loop();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(thread_count));
    for (int w = 0; w < thread_count; ++w) pool.emplace_back(worker_loop);
    for (std::thread& th : pool) th.join();
  }

  for (int r = 0; r < runs; ++r) {
    if (outcomes[static_cast<size_t>(r)].diverged) result.diverged_runs.push_back(r);
  }
  if (5 * static_cast<long>(result.diverged_runs.size()) > static_cast<long>(runs)) {
    const StabilityReport stab = stability_report(config.system);
    std::ostringstream msg;
    msg << result.diverged_runs.size() << " of " << runs
        << " runs diverged; the system looks unstable (assumption2_margin="
        << stab.assumption2_margin << ", mss_radius=" << stab.mss_radius << ")";
    throw InstabilityError(msg.str(), -1);
  }

  // Aggregate in run order.
  result.samples.assign(config.checkpoints.size(),
                        std::vector<MetricSamples>(static_cast<size_t>(k)));
  for (int r = 0; r < runs; ++r) {
    const RunOutcome& outcome = outcomes[static_cast<size_t>(r)];
    if (outcome.diverged) continue;
    result.average_energy_samples.push_back(outcome.average_energy);
    for (size_t cp = 0; cp < config.checkpoints.size(); ++cp) {
      for (int i = 0; i < k; ++i) {
        const ModeBounds& mb = outcome.snapshots[cp][static_cast<size_t>(i)];
        MetricSamples& dst = result.samples[cp][static_cast<size_t>(i)];
        dst.error_inf.push_back(mb.error_inf);
        dst.dd_bound.push_back(mb.dd_bound);
        dst.di_visits.push_back(mb.di_bound_visits);
        dst.di_pmf.push_back(mb.di_bound_pmf);
        dst.lambda_min.push_back(mb.lambda_min);
        dst.lambda_max.push_back(mb.lambda_max);
        dst.visits.push_back(static_cast<double>(mb.visits));
      }
    }
  }

  auto quantile_or_nan = [](const std::vector<double>& xs, double q) {
    if (xs.empty()) return kNaN;
    for (double x : xs) {
      if (std::isnan(x)) return kNaN;
    }
    return quantile(xs, q);
  };

  for (size_t cp = 0; cp < config.checkpoints.size(); ++cp) {
    for (int i = 0; i < k; ++i) {
      const MetricSamples& ms = result.samples[cp][static_cast<size_t>(i)];
      for (double q : config.options.quantiles) {
        QuantileCurvePoint point;
        point.horizon = config.checkpoints[cp];
        point.mode = i + 1;
        point.quantile = q;
        point.error_inf = quantile_or_nan(ms.error_inf, q);
        point.dd_bound = quantile_or_nan(ms.dd_bound, q);
        point.di_visits = quantile_or_nan(ms.di_visits, q);
        point.di_pmf = quantile_or_nan(ms.di_pmf, q);
        point.lambda_min = quantile_or_nan(ms.lambda_min, q);
        point.lambda_max = quantile_or_nan(ms.lambda_max, q);
        point.visits = quantile_or_nan(ms.visits, q);
        result.curves.push_back(point);
      }
    }
  }

  // Rate fit per mode on median errors; left as NaN when the grid or the
  // medians cannot support a fit.
  for (int i = 0; i < k; ++i) {
    RateFit fit;
    fit.exponent = kNaN;
    fit.r_squared = kNaN;
    try {
      std::vector<double> horizons;
      for (long c : config.checkpoints) horizons.push_back(static_cast<double>(c));
      fit = rate_exponent_fit(horizons, result.median_errors(i));
    } catch (const InvalidInputError&) {
    }
    result.rate_fits.push_back(std::move(fit));
  }

  result.stability = stability_report(config.system);
  for (double q : config.options.quantiles) {
    result.stability.average_energy_quantiles.push_back(
        result.average_energy_samples.empty()
            ? kNaN
            : quantile(result.average_energy_samples, q));
  }
  return result;
}

std::vector<double> ExperimentResult::median_errors(int mode) const {
  std::vector<double> medians;
  for (size_t cp = 0; cp < checkpoints.size(); ++cp) {
    const MetricSamples& ms = samples[cp][static_cast<size_t>(mode)];
    medians.push_back(ms.error_inf.empty() ? kNaN : quantile(ms.error_inf, 0.5));
  }
  return medians;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& bytes,
                Manifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  out << bytes;
  out.flush();
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
  manifest.files.push_back({path.string(), fnv1a64(bytes), bytes.size()});
}

std::string curves_csv(const ExperimentResult& result) {
  std::ostringstream out;
  out << "T,mode,quantile,error_inf,dd_bound,di_visits,di_pmf,lambda_min,"
         "lambda_max,visits\n";
  for (const QuantileCurvePoint& p : result.curves) {
    out << p.horizon << "," << p.mode << "," << fmt_g17(p.quantile) << ","
        << fmt_g17(p.error_inf) << "," << fmt_g17(p.dd_bound) << ","
        << fmt_g17(p.di_visits) << "," << fmt_g17(p.di_pmf) << ","
        << fmt_g17(p.lambda_min) << "," << fmt_g17(p.lambda_max) << ","
        << fmt_g17(p.visits) << "\n";
  }
  return out.str();
}

std::string fig1_csv(const ExperimentResult& result) {
  std::ostringstream out;
  out << "T,mode,err_q25,err_median,err_q75\n";
  for (size_t cp = 0; cp < result.checkpoints.size(); ++cp) {
    for (int i = 0; i < result.modes; ++i) {
      const std::vector<double>& errs =
          result.samples[cp][static_cast<size_t>(i)].error_inf;
      out << result.checkpoints[cp] << "," << i + 1;
      if (errs.empty()) {
        out << ",nan,nan,nan\n";
      } else {
        out << "," << fmt_g17(quantile(errs, 0.25)) << ","
            << fmt_g17(quantile(errs, 0.5)) << "," << fmt_g17(quantile(errs, 0.75))
            << "\n";
      }
    }
  }
  return out.str();
}

std::string summary_json_text(const ExperimentResult& result) {
  nlohmann::ordered_json doc;
  doc["provenance"]["config_hash"] = hex64(result.config_hash);
  doc["provenance"]["master_seed"] = result.master_seed;
  doc["provenance"]["run_seeds"] = result.run_seeds;
  doc["provenance"]["diverged_runs"] = result.diverged_runs;
  doc["runs"] = result.runs;
  doc["completed_runs"] =
      result.runs - static_cast<int>(result.diverged_runs.size());
  doc["horizon"] = result.horizon;
  doc["checkpoints"] = result.checkpoints;
  doc["quantiles"] = result.quantiles;
  doc["stability"] =
      nlohmann::ordered_json::parse(stability_report_json(result.stability));
  nlohmann::ordered_json fits = nlohmann::ordered_json::array();
  for (size_t i = 0; i < result.rate_fits.size(); ++i) {
    const RateFit& fit = result.rate_fits[i];
    nlohmann::ordered_json j;
    j["mode"] = i + 1;
    j["exponent"] = std::isnan(fit.exponent) ? nlohmann::ordered_json(nullptr)
                                             : nlohmann::ordered_json(fit.exponent);
    j["r_squared"] = std::isnan(fit.r_squared)
                         ? nlohmann::ordered_json(nullptr)
                         : nlohmann::ordered_json(fit.r_squared);
    j["horizons"] = fit.horizons;
    j["median_errors"] = fit.median_errors;
    fits.push_back(j);
  }
  doc["rate_fits"] = fits;
  return doc.dump(2) + "\n";
}

std::string plot_stub() {
  return R"(#!/usr/bin/env python3
"""Redraws the error-quantile bands from fig1_data.csv (kept out of the
core binary; any CSV-aware plotting tool works just as well)."""
import csv
import sys
from collections import defaultdict

path = sys.argv[1] if len(sys.argv) > 1 else "fig1_data.csv"
series = defaultdict(list)
with open(path) as fh:
    for row in csv.DictReader(fh):
        series[int(row["mode"])].append(
            (int(row["T"]), float(row["err_q25"]),
             float(row["err_median"]), float(row["err_q75"])))

try:
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit("matplotlib not available; the CSV parses fine: "
             + ", ".join(f"mode {m}: {len(v)} checkpoints" for m, v in series.items()))

fig, ax = plt.subplots()
for mode, rows in sorted(series.items()):
    rows.sort()
    ts = [r[0] for r in rows]
    ax.fill_between(ts, [r[1] for r in rows], [r[3] for r in rows], alpha=0.3)
    ax.plot(ts, [r[2] for r in rows], label=f"mode {mode}")
ax.set_xscale("log")
ax.set_yscale("log")
ax.set_xlabel("T")
ax.set_ylabel("max-abs estimation error")
ax.legend()
fig.savefig("fig1.png", dpi=150)
print("wrote fig1.png")
)";
}

}  // namespace

std::string manifest_json(const Manifest& manifest, int indent) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const ArtifactFile& f : manifest.files) {
    nlohmann::ordered_json j;
    j["path"] = f.path;
    j["fnv1a64"] = hex64(f.content_hash);
    j["bytes"] = f.bytes;
    doc.push_back(j);
  }
  return doc.dump(indent);
}

Manifest emit_artifacts(const ExperimentResult& result,
                        const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec && !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output directory: " + dir.string() + ": " +
                  ec.message());
  }
  Manifest manifest;
  write_file(dir / "curves.csv", curves_csv(result), manifest);
  write_file(dir / "fig1_data.csv", fig1_csv(result), manifest);
  write_file(dir / "summary.json", summary_json_text(result), manifest);
  write_file(dir / "plot_fig1.py", plot_stub(), manifest);
  return manifest;
}

}  // namespace swsysid
