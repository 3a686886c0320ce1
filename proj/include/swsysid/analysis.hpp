#pragma once

// Error metrics, the convergence-rate bound expressions, the empirical
// rate-exponent fit, and long-run trajectory diagnostics.

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "swsysid/estimator.hpp"
#include "swsysid/model.hpp"

namespace swsysid {

// max-abs entry of (estimate - truth).
double error_inf(const Mat& estimate, const Mat& truth);

// sqrt(log(lambda_max) / lambda_min) with a log floor at e, so the
// expression stays defined and monotone for small covariances. Requires
// lambda_min > 0; a mode whose covariance is still rank-deficient has no
// defined bound yet.
double data_dependent_bound(double lambda_min, double lambda_max);

// (sqrt(log T / visits), sqrt(log T / (p_i T))). Requires T >= 2,
// visits >= 1 and p_i in (0, 1].
std::pair<double, double> data_independent_bounds(long horizon, long visits,
                                                  double p_i);

// (1/T) sum_{tau=0}^{T-1} |x_tau|^2.
double average_energy(const Trajectory& traj);

struct RateFit {
  std::vector<double> horizons;
  std::vector<double> median_errors;
  double exponent = 0.0;
  double r_squared = 0.0;
};

// Least squares slope of log(err) against log(sqrt(log T / T)); an
// exponent near 1 means the errors shrink at that reference rate.
RateFit rate_exponent_fit(const std::vector<double>& horizons,
                          const std::vector<double>& median_errors);

struct ModeBounds {
  double error_inf = 0.0;
  double dd_bound = 0.0;        // NaN until the covariance has full rank
  double di_bound_visits = 0.0; // NaN until the mode has been visited
  double di_bound_pmf = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  long visits = 0;
  EstimateStatus status = EstimateStatus::InsufficientData;
};

struct BoundsReport {
  long horizon = 0;
  std::vector<ModeBounds> per_mode;
  double global_error = 0.0;  // max over modes of error_inf
  double p_star = 0.0;        // min_j p_j
};

// Snapshot of per-mode errors against the true system plus all three
// bound expressions at time state.time().
BoundsReport bounds_report(const EstimatorState& state, const SwitchedSystem& sys);

struct AppendixDiagnostics {
  std::vector<long> checkpoints;
  std::vector<double> partial_energy;    // P_T = sum_{tau=1..T} |x_tau|^2 / tau^2
  std::vector<double> cross_term_ratio;  // R_T = |sum_{tau<=T} (A x w^T + w x^T A^T)| / T
};

// Long-run diagnostics at the given checkpoints (each in [1, horizon-1]);
// empty means dyadic {2, 4, 8, ...} up to horizon-1. The cross term uses
// the stored true noises, so this is meaningful for simulated data only.
AppendixDiagnostics appendix_diagnostics(const Trajectory& traj,
                                         const SwitchedSystem& sys,
                                         std::vector<long> checkpoints = {});

// Interpolating sample quantile (same convention as numpy's default).
double quantile(std::vector<double> values, double q);

// Serialization of report types.
std::string bounds_report_json(const BoundsReport& report, int indent = 2);
std::string rate_fit_json(const RateFit& fit, int indent = 2);

// CSV with columns T,mode,error_inf,dd_bound,di_visits,di_pmf,
// lambda_min,lambda_max,visits; one row per (checkpoint, mode).
void write_curve_csv(std::ostream& out,
                     const std::vector<BoundsReport>& checkpoints);

}  // namespace swsysid
