#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>
#include <random>

#include "swsysid/estimator.hpp"
#include "swsysid/matops.hpp"
#include "test_util.hpp"

using swsysid::batch_fit;
using swsysid::EstimateStatus;
using swsysid::EstimatorState;
using swsysid::InvalidInputError;
using swsysid::Mat;
using swsysid::SwitchedSystem;
using swsysid::Trajectory;
using swsysid::Vec;

namespace {

Trajectory scalar_example_trajectory() {
  Mat half(1, 1);
  half << 0.5;
  Vec pmf(1);
  pmf << 1.0;
  const SwitchedSystem sys({half}, pmf);
  Mat w(1, 3);
  w << 1.0, -1.0, 2.0;
  return roll_out(sys, {0, 0, 0}, w);
}

EstimatorState stream_fit(const Trajectory& traj, int k, double ridge = 0.0) {
  EstimatorState state(traj.state_dim(), k, ridge);
  for (long t = 0; t < traj.horizon(); ++t) {
    state.step(traj.states.col(t), traj.switches[static_cast<size_t>(t)],
               traj.states.col(t + 1));
  }
  return state;
}

}  // namespace

TEST_CASE("batch fit solves the scalar normal equations") {
  const Trajectory traj = scalar_example_trajectory();
  const EstimatorState state = batch_fit(traj);
  // sum x_{t+1} x_t / sum x_t^2 = -1.375 / 1.25
  CHECK(state.mode_estimate(0)(0, 0) == doctest::Approx(-1.1).epsilon(1e-12));
  CHECK(state.mode(0).visits == 3);
  CHECK(state.time() == 3);
}

TEST_CASE("noise-free scalar run recovers the dynamics exactly") {
  Mat half(1, 1);
  half << 0.5;
  Vec pmf(1);
  pmf << 1.0;
  Vec x0(1);
  x0 << 1.0;
  const SwitchedSystem sys({half}, pmf, x0);
  const Trajectory traj = roll_out(sys, {0, 0, 0, 0}, Mat::Zero(1, 4));
  const EstimatorState state = batch_fit(traj);
  CHECK(state.mode_estimate(0)(0, 0) == 0.5);
}

TEST_CASE("zero residual leaves the estimate alone but grows the covariance") {
  const Trajectory traj = scalar_example_trajectory();
  EstimatorState state = stream_fit(traj, 1);
  const Mat before = state.mode_estimate(0);
  const double cov_before = state.mode(0).x_cov(0, 0);
  Vec x(1);
  x << 2.0;
  state.step(x, 0, before * x);  // x_next exactly on the current model
  CHECK(state.mode_estimate(0) == before);
  CHECK(state.mode(0).x_cov(0, 0) == cov_before + 4.0);
}

TEST_CASE("streaming updates reproduce the batch solve, randomized") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 3);
  std::uniform_int_distribution<int> modes(1, 3);
  std::uniform_int_distribution<long> horizon(20, 500);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = dim(rng);
    const int k = modes(rng);
    const SwitchedSystem sys = testutil::random_contractive_system(rng, n, k);
    const Trajectory traj =
        simulate(sys, testutil::unit_gaussian(n), horizon(rng), rng());
    const EstimatorState batch = batch_fit(traj, k);
    const EstimatorState stream = stream_fit(traj, k);
    for (int i = 0; i < k; ++i) {
      if (stream.mode(i).warm_up_step < 0) continue;  // never left warm-up
      const double diff =
          (batch.mode_estimate(i) - stream.mode_estimate(i)).cwiseAbs().maxCoeff();
      CHECK(diff < 1e-8);
    }
  }
}

TEST_CASE("single-mode fit equals the direct normal-equations oracle") {
  std::mt19937_64 rng(515);
  for (int trial = 0; trial < 10; ++trial) {
    const SwitchedSystem sys = testutil::random_contractive_system(rng, 2, 1);
    const Trajectory traj = simulate(sys, testutil::unit_gaussian(2), 300, rng());
    const EstimatorState state = batch_fit(traj);
    const Mat oracle = testutil::oracle_mode_fit(traj, 0);
    CHECK((state.mode_estimate(0) - oracle).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("relabeling modes permutes the estimates identically") {
  std::mt19937_64 rng(31);
  const SwitchedSystem sys = testutil::random_contractive_system(rng, 2, 3);
  const Trajectory traj = simulate(sys, testutil::unit_gaussian(2), 400, 8);

  Trajectory relabeled = traj;
  const int perm[3] = {2, 0, 1};
  for (int& s : relabeled.switches) s = perm[s];

  const EstimatorState base = batch_fit(traj, 3);
  const EstimatorState shuffled = batch_fit(relabeled, 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(base.mode_estimate(i) == shuffled.mode_estimate(perm[i]));
    CHECK(base.mode(i).visits == shuffled.mode(perm[i]).visits);
  }
}

TEST_CASE("a mode's estimate depends only on its own transitions") {
  std::mt19937_64 rng(77);
  const SwitchedSystem sys = testutil::random_contractive_system(rng, 2, 2);
  const Trajectory traj = simulate(sys, testutil::unit_gaussian(2), 300, 5);

  EstimatorState full(2, 2);
  EstimatorState filtered(2, 1);
  for (long t = 0; t < traj.horizon(); ++t) {
    const int s = traj.switches[static_cast<size_t>(t)];
    full.step(traj.states.col(t), s, traj.states.col(t + 1));
    if (s == 0) filtered.step(traj.states.col(t), 0, traj.states.col(t + 1));
  }
  CHECK(full.mode_estimate(0) == filtered.mode_estimate(0));
  CHECK(full.mode(0).visits == filtered.mode(0).visits);
}

TEST_CASE("covariance minimum eigenvalue never decreases") {
  std::mt19937_64 rng(212);
  const SwitchedSystem sys = testutil::random_contractive_system(rng, 2, 2);
  const Trajectory traj = simulate(sys, testutil::unit_gaussian(2), 200, 6);
  EstimatorState state(2, 2);
  std::vector<double> last_lmin(2, 0.0);
  for (long t = 0; t < traj.horizon(); ++t) {
    const int s = traj.switches[static_cast<size_t>(t)];
    state.step(traj.states.col(t), s, traj.states.col(t + 1));
    const auto [lmin, lmax, visits] = state.covariance_extremes(s);
    (void)lmax;
    (void)visits;
    CHECK(lmin >= last_lmin[static_cast<size_t>(s)] - 1e-9);
    last_lmin[static_cast<size_t>(s)] = lmin;
  }
}

TEST_CASE("covariance extremes snapshots") {
  EstimatorState state(2, 1);
  {
    const auto [lmin, lmax, visits] = state.covariance_extremes(0);
    CHECK(lmin == 0.0);
    CHECK(lmax == 0.0);
    CHECK(visits == 0);
  }
  Vec x(2), next(2);
  x << 1.0, 0.0;
  next << 0.3, 0.1;
  state.step(x, 0, next);
  {
    const auto [lmin, lmax, visits] = state.covariance_extremes(0);
    CHECK(lmin == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(lmax == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(visits == 1);
  }
}

TEST_CASE("unvisited and rank-deficient modes are flagged") {
  // Mode 2 never fires; all covariates lie on the first axis so mode 1's
  // covariance is singular in dimension 2.
  Mat d(2, 2);
  d << 0.5, 0.0, 0.0, 0.3;
  Vec pmf(1);
  pmf << 1.0;
  Vec x0(2);
  x0 << 1.0, 0.0;
  const SwitchedSystem sys({d}, pmf, x0);
  const Trajectory traj = roll_out(sys, {0, 0, 0}, Mat::Zero(2, 3));
  const EstimatorState state = batch_fit(traj, 2);

  CHECK(state.mode_status(0) == EstimateStatus::SingularCovariance);
  // Minimum-norm solve keeps the identifiable part and zeroes the rest.
  Mat expected(2, 2);
  expected << 0.5, 0.0, 0.0, 0.0;
  CHECK((state.mode_estimate(0) - expected).cwiseAbs().maxCoeff() < 1e-12);

  CHECK(state.mode_status(1) == EstimateStatus::InsufficientData);
  CHECK(state.mode(1).visits == 0);
}

TEST_CASE("maintained inverse stays consistent with the covariance") {
  const SwitchedSystem sys = testutil::reference_system();
  const Trajectory traj = simulate(sys, testutil::unit_gaussian(2), 30000, 99);
  const EstimatorState state = stream_fit(traj, 2);
  for (int i = 0; i < 2; ++i) {
    REQUIRE(state.mode(i).x_cov_inv.has_value());
    const Mat residual =
        state.mode(i).x_cov * (*state.mode(i).x_cov_inv) - Mat::Identity(2, 2);
    CHECK(residual.cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("stacked estimate matches the per-mode blocks") {
  const SwitchedSystem sys = testutil::reference_system();
  const Trajectory traj = simulate(sys, testutil::unit_gaussian(2), 1000, 4);
  const EstimatorState state = batch_fit(traj, 2);
  const Mat theta = state.theta_hat();
  REQUIRE(theta.rows() == 2);
  REQUIRE(theta.cols() == 4);
  CHECK(theta.block(0, 0, 2, 2) == state.mode_estimate(0));
  CHECK(theta.block(0, 2, 2, 2) == state.mode_estimate(1));
}

TEST_CASE("visit totals partition time") {
  const SwitchedSystem sys = testutil::reference_system();
  const Trajectory traj = simulate(sys, testutil::unit_gaussian(2), 1500, 17);
  const EstimatorState state = stream_fit(traj, 2);
  CHECK(state.mode(0).visits + state.mode(1).visits == state.time());
  CHECK(state.time() == 1500);
}

TEST_CASE("ridge seeding starts updates immediately and matches batch ridge") {
  const Trajectory traj = scalar_example_trajectory();
  const double ridge = 0.1;
  const EstimatorState stream = stream_fit(traj, 1, ridge);
  const EstimatorState batch = batch_fit(traj, 1, ridge);
  CHECK(stream.mode(0).warm_up_step == 0);
  CHECK(stream.mode_estimate(0)(0, 0) ==
        doctest::Approx(batch.mode_estimate(0)(0, 0)).epsilon(1e-12));
  // Ridge shrinks the unregularized solution.
  CHECK(std::fabs(stream.mode_estimate(0)(0, 0)) < 1.1);
}

TEST_CASE("estimate json export carries the documented fields") {
  const SwitchedSystem sys = testutil::reference_system();
  const Trajectory traj = simulate(sys, testutil::unit_gaussian(2), 256, 3);
  const EstimatorState state = stream_fit(traj, 2);
  const nlohmann::json doc = nlohmann::json::parse(swsysid::estimate_json(state));
  CHECK(doc["n"] == 2);
  CHECK(doc["k"] == 2);
  CHECK(doc["t"] == 256);
  REQUIRE(doc["modes"].size() == 2);
  CHECK(doc["modes"][0]["mode"] == 1);
  CHECK(doc["modes"][0]["a_hat"].size() == 2);
  CHECK(doc["modes"][0]["visits"].get<long>() > 0);
  CHECK(doc["modes"][0]["warm_up_step"].get<long>() >= 1);
  CHECK(doc["modes"][0]["status"] == "ok");
}

TEST_CASE("zero covariates are legal and contribute nothing") {
  const Trajectory traj = scalar_example_trajectory();
  EstimatorState state = stream_fit(traj, 1);
  const Mat before = state.mode_estimate(0);
  const double cov_before = state.mode(0).x_cov(0, 0);
  state.step(Vec::Zero(1), 0, Vec::Constant(1, 3.0));
  CHECK(state.mode_estimate(0) == before);
  CHECK(state.mode(0).x_cov(0, 0) == cov_before);
  CHECK(state.mode(0).visits == 4);
}

TEST_CASE("dimension mismatches are rejected") {
  EstimatorState state(2, 2);
  Vec bad(3);
  bad.setZero();
  Vec good(2);
  good.setZero();
  CHECK_THROWS_AS(state.step(bad, 0, good), InvalidInputError);
  CHECK_THROWS_AS(state.step(good, 5, good), InvalidInputError);
}
