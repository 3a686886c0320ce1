#pragma once

// Switched least squares identification. Each mode i keeps its own
// normal-equation statistics over the steps where it was active:
//   X_i = sum x_t x_t^T   (unnormalized covariate covariance)
//   S_i = sum x_{t+1} x_t^T
// The batch solve is A_i = S_i X_i^-1; the streaming path maintains the
// same estimate through rank-one corrections once X_i is invertible.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "swsysid/model.hpp"

namespace swsysid {

enum class EstimateStatus { Ok, InsufficientData, SingularCovariance };

const char* to_string(EstimateStatus status);

struct ModeEstimate {
  Mat a_hat;                      // n x n, prediction is a_hat * x
  Mat x_cov;                      // X_i
  Mat s_xy;                       // S_i
  std::optional<Mat> x_cov_inv;   // maintained once X_i has full rank
  long visits = 0;                // rank-one additions received
  long warm_up_step = -1;         // estimator time at which X_i became invertible
  EstimateStatus status = EstimateStatus::InsufficientData;
};

class EstimatorState {
 public:
  // ridge > 0 seeds X_i = ridge * I so updates start immediately; the
  // default 0 keeps the estimates unbiased and defers each mode until
  // its covariance has full rank.
  EstimatorState(Eigen::Index state_dim, int mode_count, double ridge = 0.0);

  // Consumes one transition (x_t, s_t, x_{t+1}); only mode s_t changes.
  // Mode indices are 0-based here (serialized forms are 1-based).
  void step(const Vec& x_t, int s_t, const Vec& x_next);

  long time() const { return t_; }
  Eigen::Index state_dim() const { return n_; }
  int mode_count() const { return static_cast<int>(per_mode_.size()); }
  double ridge() const { return ridge_; }
  const ModeEstimate& mode(int i) const;

  // Snapshot of mode i's estimate: the running a_hat past warm-up, a
  // flagged minimum-norm solve before it.
  Mat mode_estimate(int i) const;
  EstimateStatus mode_status(int i) const;

  // Stacked n x (n*k) estimate [A_1 ... A_k].
  Mat theta_hat() const;

  // (lambda_min, lambda_max) of X_i plus the visit count.
  std::tuple<double, double, long> covariance_extremes(int i) const;

  // Assembles a state from already-accumulated per-mode statistics
  // (batch path). time must equal the summed visit counts.
  static EstimatorState from_parts(Eigen::Index state_dim, int mode_count,
                                   double ridge, std::vector<ModeEstimate> modes,
                                   long time);

 private:
  ModeEstimate& mode_mut(int i);

  std::vector<ModeEstimate> per_mode_;
  Eigen::Index n_;
  long t_ = 0;
  double ridge_ = 0.0;
};

// Full-rank test used for warm-up and the batch solve.
bool has_full_rank(double lambda_min, double lambda_max);

// Per-mode normal-equation solve over the whole trajectory. mode_count 0
// infers k from the switch sequence. Modes with singular covariance get
// the minimum-norm solution and a SingularCovariance flag; modes never
// visited stay flagged InsufficientData.
EstimatorState batch_fit(const Trajectory& traj, int mode_count = 0,
                         double ridge = 0.0);

// JSON export: per-mode entries, visits, eigen extremes, warm-up index.
std::string estimate_json(const EstimatorState& state, int indent = 2);

}  // namespace swsysid
