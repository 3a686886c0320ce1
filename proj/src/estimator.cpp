#include "swsysid/estimator.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "swsysid/matops.hpp"

namespace swsysid {

namespace {

constexpr double kRankRelTol = 1e-12;

// Rank-one inverse updates accumulate rounding; a periodic direct solve
// keeps x_cov * x_cov_inv within the documented 1e-6 of identity over
// long horizons.
constexpr long kInverseRefreshInterval = 256;

ModeEstimate make_mode(Eigen::Index n, double ridge) {
  ModeEstimate me;
  me.a_hat = Mat::Zero(n, n);
  me.s_xy = Mat::Zero(n, n);
  if (ridge > 0.0) {
    me.x_cov = ridge * Mat::Identity(n, n);
    me.x_cov_inv = (1.0 / ridge) * Mat::Identity(n, n);
    me.warm_up_step = 0;
    me.status = EstimateStatus::Ok;
  } else {
    me.x_cov = Mat::Zero(n, n);
  }
  return me;
}

}  // namespace

const char* to_string(EstimateStatus status) {
  switch (status) {
    case EstimateStatus::Ok: return "ok";
    case EstimateStatus::InsufficientData: return "insufficient-data";
    case EstimateStatus::SingularCovariance: return "singular-covariance";
  }
  return "?";
}

bool has_full_rank(double lambda_min, double lambda_max) {
  return lambda_max > 0.0 && lambda_min > kRankRelTol * lambda_max;
}

EstimatorState::EstimatorState(Eigen::Index state_dim, int mode_count, double ridge)
    : n_(state_dim), ridge_(ridge) {
  if (state_dim < 1 || mode_count < 1) {
    throw InvalidInputError("EstimatorState: needs state_dim >= 1 and modes >= 1");
  }
  if (ridge < 0.0) {
    throw InvalidInputError("EstimatorState: ridge must be >= 0");
  }
  per_mode_.reserve(static_cast<size_t>(mode_count));
  for (int i = 0; i < mode_count; ++i) per_mode_.push_back(make_mode(n_, ridge));
}

const ModeEstimate& EstimatorState::mode(int i) const {
  if (i < 0 || i >= mode_count()) {
    throw InvalidInputError("EstimatorState: mode index out of range");
  }
  return per_mode_[static_cast<size_t>(i)];
}

ModeEstimate& EstimatorState::mode_mut(int i) {
  if (i < 0 || i >= mode_count()) {
    throw InvalidInputError("EstimatorState: mode index out of range");
  }
  return per_mode_[static_cast<size_t>(i)];
}

void EstimatorState::step(const Vec& x_t, int s_t, const Vec& x_next) {
  if (x_t.size() != n_ || x_next.size() != n_) {
    throw InvalidInputError("EstimatorState::step: state dimension mismatch");
  }
  if (!x_t.allFinite() || !x_next.allFinite()) {
    throw InvalidInputError("EstimatorState::step: non-finite state");
  }
  ModeEstimate& me = mode_mut(s_t);

  if (me.x_cov_inv) {
    // Rank-one correction; the gain uses the pre-update inverse.
    const Vec u = (*me.x_cov_inv) * x_t;
    const double denom = 1.0 + x_t.dot(u);
    if (!(denom > 0.0)) {
      throw NumericalError("EstimatorState::step: update denominator not positive");
    }
    const Vec residual = x_next - me.a_hat * x_t;
    me.a_hat.noalias() += residual * (u.transpose() / denom);
    me.x_cov_inv->noalias() -= (u * u.transpose()) / denom;
  } else {
    // Warm-up: accumulate statistics until X_i has full rank, then take
    // the direct solve as the starting estimate.
    const Mat x_cov_next = me.x_cov + x_t * x_t.transpose();
    const Mat s_next = me.s_xy + x_next * x_t.transpose();
    const auto [lmin, lmax] = sym_eig_extremes(x_cov_next);
    if (has_full_rank(lmin, lmax)) {
      Eigen::LDLT<Mat> ldlt(x_cov_next);
      me.a_hat = ldlt.solve(s_next.transpose()).transpose();
      me.x_cov_inv = ldlt.solve(Mat::Identity(n_, n_));
      me.warm_up_step = t_ + 1;
      me.status = EstimateStatus::Ok;
    }
  }
  me.x_cov.noalias() += x_t * x_t.transpose();
  me.s_xy.noalias() += x_next * x_t.transpose();
  me.visits += 1;
  t_ += 1;
  if (me.x_cov_inv && me.visits % kInverseRefreshInterval == 0) {
    me.x_cov_inv = me.x_cov.ldlt().solve(Mat::Identity(n_, n_));
  }
}

Mat EstimatorState::mode_estimate(int i) const {
  const ModeEstimate& me = mode(i);
  if (me.x_cov_inv) return me.a_hat;
  if (me.visits == 0) return Mat::Zero(n_, n_);
  // Singular covariance: minimum-norm least squares solution.
  return (me.x_cov.completeOrthogonalDecomposition().pseudoInverse() *
          me.s_xy.transpose())
      .transpose();
}

EstimateStatus EstimatorState::mode_status(int i) const {
  const ModeEstimate& me = mode(i);
  if (me.x_cov_inv) return EstimateStatus::Ok;
  return me.visits == 0 ? EstimateStatus::InsufficientData
                        : EstimateStatus::SingularCovariance;
}

Mat EstimatorState::theta_hat() const {
  Mat theta(n_, n_ * mode_count());
  for (int i = 0; i < mode_count(); ++i) {
    theta.block(0, n_ * i, n_, n_) = mode_estimate(i);
  }
  return theta;
}

std::tuple<double, double, long> EstimatorState::covariance_extremes(int i) const {
  const ModeEstimate& me = mode(i);
  const auto [lmin, lmax] = sym_eig_extremes(me.x_cov);
  return {lmin, lmax, me.visits};
}

EstimatorState batch_fit(const Trajectory& traj, int mode_count, double ridge) {
  const long horizon = traj.horizon();
  if (horizon < 1) {
    throw InvalidInputError("batch_fit: trajectory must have at least one step");
  }
  int k = mode_count;
  if (k == 0) {
    k = 1 + *std::max_element(traj.switches.begin(), traj.switches.end());
  }
  const Eigen::Index n = traj.state_dim();

  // Accumulate per-mode normal equations in one pass.
  std::vector<Mat> x_cov(static_cast<size_t>(k), ridge > 0.0
                                                     ? Mat(ridge * Mat::Identity(n, n))
                                                     : Mat(Mat::Zero(n, n)));
  std::vector<Mat> s_xy(static_cast<size_t>(k), Mat::Zero(n, n));
  std::vector<long> visits(static_cast<size_t>(k), 0);
  for (long t = 0; t < horizon; ++t) {
    const int s = traj.switches[static_cast<size_t>(t)];
    if (s < 0 || s >= k) {
      throw InvalidInputError("batch_fit: mode index out of range");
    }
    x_cov[static_cast<size_t>(s)].noalias() +=
        traj.states.col(t) * traj.states.col(t).transpose();
    s_xy[static_cast<size_t>(s)].noalias() +=
        traj.states.col(t + 1) * traj.states.col(t).transpose();
    visits[static_cast<size_t>(s)] += 1;
  }

  // Solve per mode and splice the results into an EstimatorState so the
  // batch and streaming paths share one report/serialization surface.
  std::vector<ModeEstimate> modes;
  long total = 0;
  for (int i = 0; i < k; ++i) {
    ModeEstimate me = make_mode(n, 0.0);
    me.x_cov = x_cov[static_cast<size_t>(i)];
    me.s_xy = s_xy[static_cast<size_t>(i)];
    me.visits = visits[static_cast<size_t>(i)];
    total += me.visits;
    if (me.visits == 0 && ridge <= 0.0) {
      me.status = EstimateStatus::InsufficientData;
      modes.push_back(std::move(me));
      continue;
    }
    const auto [lmin, lmax] = sym_eig_extremes(me.x_cov);
    if (has_full_rank(lmin, lmax)) {
      Eigen::LDLT<Mat> ldlt(me.x_cov);
      me.a_hat = ldlt.solve(me.s_xy.transpose()).transpose();
      me.x_cov_inv = ldlt.solve(Mat::Identity(n, n));
      me.status = EstimateStatus::Ok;
    } else {
      me.a_hat = (me.x_cov.completeOrthogonalDecomposition().pseudoInverse() *
                  me.s_xy.transpose())
                     .transpose();
      me.status = EstimateStatus::SingularCovariance;
    }
    modes.push_back(std::move(me));
  }

  return EstimatorState::from_parts(n, k, ridge, std::move(modes), total);
}

EstimatorState EstimatorState::from_parts(Eigen::Index state_dim, int mode_count,
                                          double ridge,
                                          std::vector<ModeEstimate> modes, long time) {
  EstimatorState state(state_dim, mode_count, ridge);
  if (modes.size() != static_cast<size_t>(mode_count)) {
    throw InvalidInputError("EstimatorState::from_parts: wrong mode count");
  }
  state.per_mode_ = std::move(modes);
  state.t_ = time;
  return state;
}

std::string estimate_json(const EstimatorState& state, int indent) {
  nlohmann::ordered_json doc;
  doc["n"] = state.state_dim();
  doc["k"] = state.mode_count();
  doc["t"] = state.time();
  doc["ridge"] = state.ridge();
  nlohmann::ordered_json modes = nlohmann::ordered_json::array();
  for (int i = 0; i < state.mode_count(); ++i) {
    const ModeEstimate& me = state.mode(i);
    const Mat a = state.mode_estimate(i);
    nlohmann::ordered_json m;
    m["mode"] = i + 1;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (Eigen::Index c = 0; c < a.cols(); ++c) row.push_back(a(r, c));
      rows.push_back(row);
    }
    m["a_hat"] = rows;
    m["visits"] = me.visits;
    const auto [lmin, lmax, visits] = state.covariance_extremes(i);
    (void)visits;
    m["lambda_min"] = lmin;
    m["lambda_max"] = lmax;
    if (me.warm_up_step >= 0) {
      m["warm_up_step"] = me.warm_up_step;
    } else {
      m["warm_up_step"] = nullptr;
    }
    m["status"] = to_string(state.mode_status(i));
    modes.push_back(m);
  }
  doc["modes"] = modes;
  return doc.dump(indent);
}

}  // namespace swsysid
