#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "swsysid/analysis.hpp"
#include "swsysid/estimator.hpp"
#include "swsysid/harness.hpp"
#include "swsysid/matops.hpp"
#include "swsysid/model.hpp"

// Worked-example suite. Every check recomputes its expected value with a
// plain-loop oracle (no Eigen, none of the library kernels) so the code
// paths under test are validated against independent arithmetic.

namespace swsysid {

namespace {

using Grid = std::vector<std::vector<double>>;

std::vector<double> grid_vec(const Grid& a, const std::vector<double>& v) {
  std::vector<double> out(a.size(), 0.0);
  for (size_t i = 0; i < a.size(); ++i) {
    for (size_t k = 0; k < v.size(); ++k) out[i] += a[i][k] * v[k];
  }
  return out;
}

// Gauss-Jordan with partial pivoting; inputs here are tiny and well
// conditioned.
Grid grid_inverse(Grid a) {
  const size_t n = a.size();
  Grid inv(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (size_t col = 0; col < n; ++col) {
    size_t piv = col;
    for (size_t r = col + 1; r < n; ++r) {
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    }
    std::swap(a[piv], a[col]);
    std::swap(inv[piv], inv[col]);
    const double d = a[col][col];
    for (size_t j = 0; j < n; ++j) {
      a[col][j] /= d;
      inv[col][j] /= d;
    }
    for (size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      for (size_t j = 0; j < n; ++j) {
        a[r][j] -= f * a[col][j];
        inv[r][j] -= f * inv[col][j];
      }
    }
  }
  return inv;
}

// Dominant eigenvalue magnitude by power iteration; fine for the PSD and
// nonnegative matrices the oracles need it for.
double power_iteration_radius(const Grid& a, int iters = 500) {
  std::vector<double> v(a.size(), 1.0);
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    std::vector<double> w = grid_vec(a, v);
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    lambda = norm;
    for (double& x : w) x /= norm;
    v = std::move(w);
  }
  return lambda;
}

double oracle_spectral_norm(const Grid& a) {
  const size_t n = a.size(), m = a[0].size();
  Grid ata(m, std::vector<double>(m, 0.0));
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < m; ++j) {
      for (size_t k = 0; k < n; ++k) ata[i][j] += a[k][i] * a[k][j];
    }
  }
  return std::sqrt(power_iteration_radius(ata));
}

// Closed-form eigenvalues of a 2x2 matrix; returns |lambda|_max.
double oracle_radius_2x2(double a, double b, double c, double d) {
  const double tr = a + d;
  const double det = a * d - b * c;
  const double disc = tr * tr - 4.0 * det;
  if (disc >= 0.0) {
    const double root = std::sqrt(disc);
    return std::max(std::fabs((tr + root) / 2.0), std::fabs((tr - root) / 2.0));
  }
  return std::sqrt(det);  // complex pair, modulus sqrt(det)
}

struct Regression {
  double slope;
  double r_squared;
};

Regression oracle_regression(const std::vector<double>& xs,
                             const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
    syy += ys[i] * ys[i];
  }
  const double vx = sxx - sx * sx / n;
  const double vy = syy - sy * sy / n;
  const double cxy = sxy - sx * sy / n;
  return {cxy / vx, cxy * cxy / (vx * vy)};
}

SwitchedSystem reference_system() {
  Mat a1(2, 2), a2(2, 2);
  a1 << 1.5, 0.0, 0.0, 0.2;
  a2 << 0.01, 0.1, 0.1, 0.1;
  Vec pmf(2);
  pmf << 0.75, 0.25;
  return SwitchedSystem({a1, a2}, pmf);
}

struct Suite {
  std::ostream& out;
  int failures = 0;

  void check(const std::string& name, double got, double want, double tol,
             const std::string& note = "") {
    const bool ok = std::isfinite(got) && std::fabs(got - want) <= tol;
    char line[256];
    std::snprintf(line, sizeof(line), "%-4s %-46s got=%.12g want=%.12g%s%s\n",
                  ok ? "ok" : "FAIL", name.c_str(), got, want,
                  note.empty() ? "" : "  ", note.c_str());
    out << line;
    if (!ok) ++failures;
  }

  void check_true(const std::string& name, bool ok, const std::string& note = "") {
    out << (ok ? "ok   " : "FAIL ") << name << (note.empty() ? "" : "  ") << note
        << "\n";
    if (!ok) ++failures;
  }
};

}  // namespace

int run_selftest(std::ostream& out) {
  Suite suite{out};

  // Scalar trajectory x_{t+1} = 0.5 x_t + w_t with w = (1, -1, 2).
  {
    const double a = 0.5;
    const std::vector<double> w = {1.0, -1.0, 2.0};
    std::vector<double> x = {0.0};
    for (double wt : w) x.push_back(a * x.back() + wt);

    Mat a_mat(1, 1);
    a_mat << a;
    Vec pmf(1);
    pmf << 1.0;
    SwitchedSystem sys({a_mat}, pmf);
    Mat noises(1, 3);
    noises << w[0], w[1], w[2];
    const Trajectory traj = roll_out(sys, {0, 0, 0}, noises);
    for (size_t t = 0; t < x.size(); ++t) {
      suite.check("simulate: hand recursion x_" + std::to_string(t),
                  traj.states(0, static_cast<long>(t)), x[t], 0.0);
    }

    // Normal equations by hand: sum x_{t+1} x_t / sum x_t^2.
    double num = 0.0, den = 0.0;
    for (size_t t = 0; t + 1 < x.size(); ++t) {
      num += x[t + 1] * x[t];
      den += x[t] * x[t];
    }
    const EstimatorState batch = batch_fit(traj);
    suite.check("batch fit: scalar normal equations", batch.mode_estimate(0)(0, 0),
                num / den, 1e-15);
    suite.check("batch fit: frozen value", batch.mode_estimate(0)(0, 0), -1.1, 1e-12);
    suite.check("error_inf: scalar example",
                error_inf(batch.mode_estimate(0), a_mat), std::fabs(num / den - a),
                1e-12);

    // Streaming pass must land on the batch solution.
    EstimatorState stream(1, 1);
    for (long t = 0; t < traj.horizon(); ++t) {
      stream.step(traj.states.col(t), 0, traj.states.col(t + 1));
    }
    suite.check("recursive fit: matches batch on scalar run",
                stream.mode_estimate(0)(0, 0), num / den, 1e-12);

    // Average energy over tau = 0..T-1.
    double energy = 0.0;
    for (size_t t = 0; t + 1 < x.size(); ++t) energy += x[t] * x[t];
    energy /= 3.0;
    suite.check("average energy: hand sum", average_energy(traj), energy, 1e-15);

    // Cross term 2 a x_tau w_tau summed over tau = 1, 2, divided by T = 2.
    double cross = 0.0;
    for (size_t tau = 1; tau <= 2; ++tau) cross += 2.0 * a * x[tau] * w[tau];
    const AppendixDiagnostics diag = appendix_diagnostics(traj, sys, {2});
    suite.check("cross-term ratio: hand sum", diag.cross_term_ratio.at(0),
                std::fabs(cross) / 2.0, 1e-15);
    suite.check("cross-term ratio: frozen value", diag.cross_term_ratio.at(0), 1.0,
                1e-12);
    double partial = 0.0;
    for (size_t tau = 1; tau <= 2; ++tau) {
      partial += x[tau] * x[tau] / (static_cast<double>(tau) * tau);
    }
    suite.check("partial energy sum: hand sum", diag.partial_energy.at(0), partial,
                1e-15);
  }

  // One rank-one update from a warmed-up scalar state: X = [[1]],
  // A = [[0]], pair (x, x') = (1, 1) gives A' = 0.5 and X' = 2.
  {
    ModeEstimate me;
    me.a_hat = Mat::Constant(1, 1, 0.0);
    me.x_cov = Mat::Constant(1, 1, 1.0);
    me.s_xy = Mat::Constant(1, 1, 0.0);
    me.x_cov_inv = Mat::Constant(1, 1, 1.0);
    me.visits = 1;
    me.warm_up_step = 1;
    me.status = EstimateStatus::Ok;
    std::vector<ModeEstimate> modes;
    modes.push_back(std::move(me));
    EstimatorState state = EstimatorState::from_parts(1, 1, 0.0, std::move(modes), 1);
    state.step(Vec::Constant(1, 1.0), 0, Vec::Constant(1, 1.0));

    const double denom = 1.0 + 1.0 * 1.0 * 1.0;      // 1 + x X^-1 x
    const double correction = 1.0 * 1.0 * (1.0 - 0.0) / denom;
    suite.check("recursive step: hand rank-one correction",
                state.mode_estimate(0)(0, 0), 0.0 + correction, 1e-15);
    suite.check("recursive step: covariance gains x x^T", state.mode(0).x_cov(0, 0),
                2.0, 0.0);
  }

  // Rank-one inverse updates against explicit Gauss-Jordan inverses.
  {
    Mat inv1 = Mat::Constant(1, 1, 1.0);
    Vec v1 = Vec::Constant(1, 1.0);
    const Mat up1 = sherman_morrison_inv_update(inv1, v1);
    const Grid direct1 = grid_inverse({{1.0 + 1.0}});
    suite.check("sherman-morrison: 1x1 vs direct inverse", up1(0, 0), direct1[0][0],
                1e-15);
    suite.check("sherman-morrison: frozen value", up1(0, 0), 0.5, 0.0);

    Mat inv2 = Mat::Identity(2, 2);
    Vec v2(2);
    v2 << 1.0, 0.0;
    const Mat up2 = sherman_morrison_inv_update(inv2, v2);
    const Grid direct2 = grid_inverse({{2.0, 0.0}, {0.0, 1.0}});
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) {
        suite.check("sherman-morrison: 2x2 entry " + std::to_string(r) +
                        std::to_string(c),
                    up2(r, c), direct2[static_cast<size_t>(r)][static_cast<size_t>(c)],
                    1e-15);
      }
    }
  }

  // Kronecker product of diagonals by index arithmetic.
  {
    Mat d(2, 2);
    d << 1.5, 0.0, 0.0, 0.2;
    const Mat got = kron(d, d);
    const double diag_vals[2] = {1.5, 0.2};
    bool ok = got.rows() == 4 && got.cols() == 4;
    for (int i = 0; i < 4 && ok; ++i) {
      for (int j = 0; j < 4 && ok; ++j) {
        const double want =
            (i == j) ? diag_vals[i / 2] * diag_vals[i % 2] : 0.0;
        ok = std::fabs(got(i, j) - want) <= 1e-15;
      }
    }
    suite.check_true("kron: diagonal expansion = diag(2.25,0.3,0.3,0.04)", ok);
  }

  // Eigen extremes of [[2,1],[1,2]] from the characteristic polynomial.
  {
    Mat m(2, 2);
    m << 2.0, 1.0, 1.0, 2.0;
    const auto [lmin, lmax] = sym_eig_extremes(m);
    // lambda = ((a+d) +- sqrt((a-d)^2 + 4 b^2)) / 2
    const double mid = (2.0 + 2.0) / 2.0;
    const double half = std::sqrt((2.0 - 2.0) * (2.0 - 2.0) + 4.0) / 2.0;
    suite.check("sym_eig_extremes: lambda_min by quadratic formula", lmin,
                mid - half, 1e-12);
    suite.check("sym_eig_extremes: lambda_max by quadratic formula", lmax,
                mid + half, 1e-12);
  }

  // Spectral norm of the symmetric reference mode.
  {
    const Grid g = {{0.01, 0.1}, {0.1, 0.1}};
    Mat m(2, 2);
    m << 0.01, 0.1, 0.1, 0.1;
    suite.check("spectral_norm: vs power iteration", spectral_norm(m),
                oracle_spectral_norm(g), 1e-10);
    suite.check("spectral_norm: frozen value", spectral_norm(m), 0.16465856099,
                1e-9);
  }

  // Spectral radius of the rotation [[0,1],[-1,0]] (complex pair).
  {
    Mat m(2, 2);
    m << 0.0, 1.0, -1.0, 0.0;
    suite.check("max_abs_eig: rotation has radius 1", max_abs_eig(m),
                oracle_radius_2x2(0.0, 1.0, -1.0, 0.0), 1e-12);
  }

  // Bound plug-ins recomputed with plain arithmetic.
  {
    suite.check("data_dependent_bound(10,10)", data_dependent_bound(10.0, 10.0),
                std::sqrt(std::log(10.0) / 10.0), 1e-15);
    const auto [by_visits, by_pmf] = data_independent_bounds(100, 25, 0.25);
    suite.check("data_independent_bounds: by visits", by_visits,
                std::sqrt(std::log(100.0) / 25.0), 1e-15);
    suite.check("data_independent_bounds: by pmf", by_pmf,
                std::sqrt(std::log(100.0) / 25.0), 1e-15);
    const auto second = data_independent_bounds(100, 75, 0.75);
    suite.check("data_independent_bounds: 75 visits", second.first,
                std::sqrt(std::log(100.0) / 75.0), 1e-15);
  }

  // Stability diagnostics of the reference system.
  {
    const SwitchedSystem sys = reference_system();
    const double sigma1 = oracle_spectral_norm({{1.5, 0.0}, {0.0, 0.2}});
    const double sigma2 = oracle_spectral_norm({{0.01, 0.1}, {0.1, 0.1}});
    const double margin = std::pow(sigma1, 0.75) * std::pow(sigma2, 0.25);
    suite.check("assumption2_margin: vs oracle", assumption2_margin(sys), margin,
                1e-9);
    suite.check("assumption2_margin: frozen value", assumption2_margin(sys), 0.8634,
                1e-4);

    // Assemble sum p_i (A_i kron A_i) with index loops.
    const Grid a1 = {{1.5, 0.0}, {0.0, 0.2}};
    const Grid a2 = {{0.01, 0.1}, {0.1, 0.1}};
    const double p[2] = {0.75, 0.25};
    Grid mix(4, std::vector<double>(4, 0.0));
    for (int which = 0; which < 2; ++which) {
      const Grid& a = which == 0 ? a1 : a2;
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
          mix[static_cast<size_t>(i)][static_cast<size_t>(j)] +=
              p[which] * a[static_cast<size_t>(i / 2)][static_cast<size_t>(j / 2)] *
              a[static_cast<size_t>(i % 2)][static_cast<size_t>(j % 2)];
        }
      }
    }
    suite.check("mss_radius: vs power iteration", mss_radius(sys),
                power_iteration_radius(mix), 1e-9);
    suite.check("mss_radius: frozen value", mss_radius(sys), 1.688, 1e-3);
  }

  // Rate fit against a closed-form simple regression.
  {
    std::vector<double> horizons, exact, fast, xs, ys_fast;
    for (long t = 128; t <= 16384; t *= 2) {
      const double td = static_cast<double>(t);
      horizons.push_back(td);
      exact.push_back(3.0 * std::sqrt(std::log(td) / td));
      fast.push_back(3.0 / td);
      xs.push_back(0.5 * (std::log(std::log(td)) - std::log(td)));
      ys_fast.push_back(std::log(3.0 / td));
    }
    const RateFit unit = rate_exponent_fit(horizons, exact);
    suite.check("rate fit: exact reference-rate data has exponent 1", unit.exponent,
                1.0, 1e-9);
    suite.check("rate fit: exact reference-rate data has r^2 = 1", unit.r_squared,
                1.0, 1e-9);
    const RateFit faster = rate_exponent_fit(horizons, fast);
    const Regression reg = oracle_regression(xs, ys_fast);
    suite.check("rate fit: 1/T data matches closed-form slope", faster.exponent,
                reg.slope, 1e-12);
    suite.check_true("rate fit: 1/T data detects exponent > 1",
                     faster.exponent > 1.0);
  }

  out << (suite.failures == 0 ? "selftest: all checks passed\n"
                              : "selftest: FAILURES\n");
  return suite.failures;
}

}  // namespace swsysid
