#pragma once

// Switched linear system model: x_{t+1} = A_{s_t} x_t + w_t with the
// active matrix A_{s_t} drawn i.i.d. from a mode pmf and w_t from a
// configurable zero-mean noise model. Includes trajectory simulation and
// the two stability diagnostics used throughout (geometric spectral-norm
// margin and mean-square-stability radius).

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include "swsysid/errors.hpp"

namespace swsysid {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// States above this magnitude abort a simulation with InstabilityError
// instead of propagating non-finite values.
inline constexpr double kStateOverflowGuard = 1e150;

class SwitchedSystem {
 public:
  // modes: k matrices, all n x n. switch_pmf: k strictly positive
  // probabilities summing to 1 (within 1e-12). x0 empty means the origin.
  SwitchedSystem(std::vector<Mat> modes, Vec switch_pmf, Vec x0 = Vec());

  Eigen::Index state_dim() const { return n_; }
  int mode_count() const { return static_cast<int>(modes_.size()); }
  const Mat& mode(int i) const { return modes_.at(static_cast<size_t>(i)); }
  const std::vector<Mat>& modes() const { return modes_; }
  const Vec& switch_pmf() const { return pmf_; }
  const Vec& x0() const { return x0_; }

  // Stable identifier over dimensions, entries and pmf.
  std::uint64_t hash() const { return hash_; }

 private:
  std::vector<Mat> modes_;
  Vec pmf_;
  Vec x0_;
  Eigen::Index n_ = 0;
  std::uint64_t hash_ = 0;
};

enum class NoiseKind { GaussianIid, StudentTIid, ScheduledGaussian };

const char* to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& name);

// Zero-mean noise with long-run covariance C. Three shipped generators:
//   gaussian_iid       w_t ~ N(0, C)
//   student_t_iid      multivariate t, rescaled so Cov(w_t) = C (dof > 2)
//   scheduled_gaussian w_t ~ N(0, schedule(t) * C), schedule periodic,
//                      entries in (0, inf) so the running covariance
//                      stays bounded away from zero
class NoiseModel {
 public:
  static NoiseModel gaussian(Mat covariance);
  static NoiseModel student_t(Mat covariance, double dof = 5.0);
  static NoiseModel scheduled_gaussian(Mat covariance, std::vector<double> schedule);

  NoiseKind kind() const { return kind_; }
  Eigen::Index dim() const { return cov_.rows(); }
  const Mat& covariance() const { return cov_; }
  double dof() const { return dof_; }
  const std::vector<double>& schedule() const { return schedule_; }
  double schedule_at(long t) const;

  // Draws w_t. Deterministic function of the stream state; the Cholesky
  // factor of C is computed once at construction.
  Vec sample(long t, std::mt19937_64& stream) const;

 private:
  NoiseModel(NoiseKind kind, Mat cov, double dof, std::vector<double> schedule);

  NoiseKind kind_;
  Mat cov_;
  Mat chol_;  // lower factor, C = chol chol^T
  double dof_ = 0.0;
  std::vector<double> schedule_;
};

// A realized run: states x_0..x_T (columns), mode indices s_0..s_{T-1}
// (0-based internally) and noises w_0..w_{T-1} (columns). The recursion
// x_{t+1} = A_{s_t} x_t + w_t holds exactly in double arithmetic.
struct Trajectory {
  std::uint64_t system_hash = 0;
  std::uint64_t seed = 0;
  Mat states;
  std::vector<int> switches;
  Mat noises;

  long horizon() const { return static_cast<long>(switches.size()); }
  Eigen::Index state_dim() const { return states.rows(); }
};

// Runs the recursion for given switch/noise sequences. switches.size()
// must equal noises.cols(). Throws InstabilityError past the overflow
// guard, reporting the first offending time index.
Trajectory roll_out(const SwitchedSystem& sys, const std::vector<int>& switches,
                    const Mat& noises);

// Draws switches i.i.d. from the pmf and noises from the model, then
// rolls out. Deterministic function of the seed; per step the switch is
// drawn before the noise.
Trajectory simulate(const SwitchedSystem& sys, const NoiseModel& noise,
                    long horizon, std::uint64_t seed);

// Ordered product A_{s_t} A_{s_{t-1}} ... A_{s_tau}; identity when t < tau.
Mat transition_product(const std::vector<int>& switches, const SwitchedSystem& sys,
                       long t, long tau);

// Geometric mean of per-mode spectral norms weighted by the switch pmf,
// prod_i sigma_max(A_i)^{p_i}. Values below 1 guarantee almost-sure
// average-sense stability of the noisy system.
double assumption2_margin(const SwitchedSystem& sys);

// Spectral radius of sum_i p_i (A_i kron A_i); below 1 iff the system is
// mean square stable.
double mss_radius(const SwitchedSystem& sys);

// CSV with columns t, s_t, x_1..x_n, w_1..w_n; one row per time index
// 0..T, the final row carrying only the state. Mode indices are 1-based
// in the file. Values are %.17g so a round trip is lossless.
void write_trajectory_csv(const Trajectory& traj, std::ostream& out);
Trajectory read_trajectory_csv(std::istream& in);

}  // namespace swsysid
