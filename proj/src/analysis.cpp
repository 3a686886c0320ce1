#include "swsysid/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "swsysid/matops.hpp"

namespace swsysid {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt_g17(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double error_inf(const Mat& estimate, const Mat& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols()) {
    throw InvalidInputError("error_inf: dimension mismatch");
  }
  return max_abs_entry(estimate - truth);
}

double data_dependent_bound(double lambda_min, double lambda_max) {
  if (!(lambda_min > 0.0)) {
    throw InvalidInputError(
        "data_dependent_bound: lambda_min <= 0, covariance not yet identifiable");
  }
  if (lambda_max < lambda_min) {
    throw InvalidInputError("data_dependent_bound: lambda_max < lambda_min");
  }
  return std::sqrt(std::log(std::max(lambda_max, std::exp(1.0))) / lambda_min);
}

std::pair<double, double> data_independent_bounds(long horizon, long visits,
                                                  double p_i) {
  if (horizon < 2) {
    throw InvalidInputError("data_independent_bounds: horizon must be >= 2");
  }
  if (visits < 1) {
    throw InvalidInputError(
        "data_independent_bounds: mode not yet visited, bound undefined");
  }
  if (!(p_i > 0.0) || p_i > 1.0) {
    throw InvalidInputError("data_independent_bounds: p_i must be in (0, 1]");
  }
  const double log_t = std::log(static_cast<double>(horizon));
  return {std::sqrt(log_t / static_cast<double>(visits)),
          std::sqrt(log_t / (p_i * static_cast<double>(horizon)))};
}

double average_energy(const Trajectory& traj) {
  const long horizon = traj.horizon();
  if (horizon < 1) {
    throw InvalidInputError("average_energy: horizon must be >= 1");
  }
  double acc = 0.0;
  for (long t = 0; t < horizon; ++t) {
    acc += traj.states.col(t).squaredNorm();
  }
  return acc / static_cast<double>(horizon);
}

RateFit rate_exponent_fit(const std::vector<double>& horizons,
                          const std::vector<double>& median_errors) {
  const size_t m = horizons.size();
  if (m < 4 || median_errors.size() != m) {
    throw InvalidInputError("rate_exponent_fit: need >= 4 matching horizons");
  }
  for (size_t i = 0; i < m; ++i) {
    if (!(horizons[i] > 1.0) || (i > 0 && horizons[i] <= horizons[i - 1])) {
      throw InvalidInputError("rate_exponent_fit: horizons must be > 1, increasing");
    }
    if (!(median_errors[i] > 0.0)) {
      throw InvalidInputError("rate_exponent_fit: errors must be positive");
    }
  }

  // Simple regression of y = log(err) on x = log(sqrt(log T / T)).
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (size_t i = 0; i < m; ++i) {
    const double x = 0.5 * (std::log(std::log(horizons[i])) - std::log(horizons[i]));
    const double y = std::log(median_errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  const double dm = static_cast<double>(m);
  const double var_x = sxx - sx * sx / dm;
  const double var_y = syy - sy * sy / dm;
  const double cov_xy = sxy - sx * sy / dm;
  if (!(var_x > 0.0)) {
    throw InvalidInputError("rate_exponent_fit: degenerate horizon grid");
  }

  RateFit fit;
  fit.horizons = horizons;
  fit.median_errors = median_errors;
  fit.exponent = cov_xy / var_x;
  fit.r_squared = var_y > 0.0 ? (cov_xy * cov_xy) / (var_x * var_y) : 1.0;
  return fit;
}

BoundsReport bounds_report(const EstimatorState& state, const SwitchedSystem& sys) {
  if (state.mode_count() != sys.mode_count() ||
      state.state_dim() != sys.state_dim()) {
    throw InvalidInputError("bounds_report: estimator/system shape mismatch");
  }
  BoundsReport report;
  report.horizon = state.time();
  report.p_star = sys.switch_pmf().minCoeff();
  report.global_error = 0.0;
  for (int i = 0; i < state.mode_count(); ++i) {
    ModeBounds mb;
    const auto [lmin, lmax, visits] = state.covariance_extremes(i);
    mb.lambda_min = lmin;
    mb.lambda_max = lmax;
    mb.visits = visits;
    mb.status = state.mode_status(i);
    mb.error_inf = error_inf(state.mode_estimate(i), sys.mode(i));
    mb.dd_bound = lmin > 0.0 ? data_dependent_bound(lmin, lmax) : kNaN;
    if (visits >= 1 && report.horizon >= 2) {
      const auto [by_visits, by_pmf] =
          data_independent_bounds(report.horizon, visits, sys.switch_pmf()(i));
      mb.di_bound_visits = by_visits;
      mb.di_bound_pmf = by_pmf;
    } else {
      mb.di_bound_visits = kNaN;
      mb.di_bound_pmf = kNaN;
    }
    report.global_error = std::max(report.global_error, mb.error_inf);
    report.per_mode.push_back(mb);
  }
  return report;
}

AppendixDiagnostics appendix_diagnostics(const Trajectory& traj,
                                         const SwitchedSystem& sys,
                                         std::vector<long> checkpoints) {
  const long horizon = traj.horizon();
  if (traj.state_dim() != sys.state_dim()) {
    throw InvalidInputError("appendix_diagnostics: trajectory/system mismatch");
  }
  if (traj.noises.cols() != horizon) {
    throw InvalidInputError("appendix_diagnostics: trajectory must carry noises");
  }
  if (checkpoints.empty()) {
    for (long c = 2; c <= horizon - 1; c *= 2) checkpoints.push_back(c);
  }
  for (size_t i = 0; i < checkpoints.size(); ++i) {
    if (checkpoints[i] < 1 || checkpoints[i] > horizon - 1 ||
        (i > 0 && checkpoints[i] <= checkpoints[i - 1])) {
      throw InvalidInputError(
          "appendix_diagnostics: checkpoints must be increasing in [1, horizon-1]");
    }
  }

  AppendixDiagnostics diag;
  diag.checkpoints = checkpoints;
  const Eigen::Index n = traj.state_dim();
  double partial = 0.0;
  Mat cross = Mat::Zero(n, n);
  size_t next = 0;
  for (long tau = 1; tau <= horizon - 1 && next < checkpoints.size(); ++tau) {
    partial += traj.states.col(tau).squaredNorm() /
               (static_cast<double>(tau) * static_cast<double>(tau));
    const Mat& a = sys.mode(traj.switches[static_cast<size_t>(tau)]);
    const Vec ax = a * traj.states.col(tau);
    cross.noalias() += ax * traj.noises.col(tau).transpose();
    cross.noalias() += traj.noises.col(tau) * ax.transpose();
    if (tau == checkpoints[next]) {
      diag.partial_energy.push_back(partial);
      diag.cross_term_ratio.push_back(spectral_norm(cross) /
                                      static_cast<double>(tau));
      ++next;
    }
  }
  return diag;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) {
    throw InvalidInputError("quantile: empty sample");
  }
  if (!(q >= 0.0 && q <= 1.0)) {
    throw InvalidInputError("quantile: q must be in [0, 1]");
  }
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  const size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

nlohmann::ordered_json mode_bounds_json(const ModeBounds& mb, int mode_1based) {
  nlohmann::ordered_json j;
  j["mode"] = mode_1based;
  j["error_inf"] = mb.error_inf;
  j["dd_bound"] = std::isnan(mb.dd_bound) ? nlohmann::ordered_json(nullptr)
                                          : nlohmann::ordered_json(mb.dd_bound);
  j["di_bound_visits"] = std::isnan(mb.di_bound_visits)
                             ? nlohmann::ordered_json(nullptr)
                             : nlohmann::ordered_json(mb.di_bound_visits);
  j["di_bound_pmf"] = std::isnan(mb.di_bound_pmf)
                          ? nlohmann::ordered_json(nullptr)
                          : nlohmann::ordered_json(mb.di_bound_pmf);
  j["lambda_min"] = mb.lambda_min;
  j["lambda_max"] = mb.lambda_max;
  j["visits"] = mb.visits;
  j["status"] = to_string(mb.status);
  return j;
}

}  // namespace

std::string bounds_report_json(const BoundsReport& report, int indent) {
  nlohmann::ordered_json doc;
  doc["horizon"] = report.horizon;
  doc["global_error"] = report.global_error;
  doc["p_star"] = report.p_star;
  nlohmann::ordered_json modes = nlohmann::ordered_json::array();
  for (size_t i = 0; i < report.per_mode.size(); ++i) {
    modes.push_back(mode_bounds_json(report.per_mode[i], static_cast<int>(i) + 1));
  }
  doc["per_mode"] = modes;
  return doc.dump(indent);
}

std::string rate_fit_json(const RateFit& fit, int indent) {
  nlohmann::ordered_json doc;
  doc["exponent"] = fit.exponent;
  doc["r_squared"] = fit.r_squared;
  doc["horizons"] = fit.horizons;
  doc["median_errors"] = fit.median_errors;
  return doc.dump(indent);
}

void write_curve_csv(std::ostream& out, const std::vector<BoundsReport>& checkpoints) {
  out << "T,mode,error_inf,dd_bound,di_visits,di_pmf,lambda_min,lambda_max,visits\n";
  for (const BoundsReport& report : checkpoints) {
    for (size_t i = 0; i < report.per_mode.size(); ++i) {
      const ModeBounds& mb = report.per_mode[i];
      out << report.horizon << "," << i + 1 << "," << fmt_g17(mb.error_inf) << ","
          << fmt_g17(mb.dd_bound) << "," << fmt_g17(mb.di_bound_visits) << ","
          << fmt_g17(mb.di_bound_pmf) << "," << fmt_g17(mb.lambda_min) << ","
          << fmt_g17(mb.lambda_max) << "," << mb.visits << "\n";
    }
  }
}

}  // namespace swsysid
