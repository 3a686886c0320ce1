#include "swsysid/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "swsysid/matops.hpp"

namespace swsysid {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(const void* data, size_t len, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t hash_double(double v, std::uint64_t h) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  return fnv1a(&bits, sizeof(bits), h);
}

std::uint64_t hash_matrix(const Mat& m, std::uint64_t h) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      h = hash_double(m(r, c), h);
    }
  }
  return h;
}

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// 53-bit uniform in [0, 1).
double uniform01(std::mt19937_64& stream) {
  return static_cast<double>(stream() >> 11) * 0x1.0p-53;
}

}  // namespace

SwitchedSystem::SwitchedSystem(std::vector<Mat> modes, Vec switch_pmf, Vec x0)
    : modes_(std::move(modes)), pmf_(std::move(switch_pmf)), x0_(std::move(x0)) {
  if (modes_.empty()) {
    throw InvalidInputError("SwitchedSystem: needs at least one mode");
  }
  n_ = modes_.front().rows();
  if (n_ < 1) {
    throw InvalidInputError("SwitchedSystem: state dimension must be >= 1");
  }
  for (const Mat& a : modes_) {
    if (a.rows() != n_ || a.cols() != n_) {
      throw InvalidInputError("SwitchedSystem: all mode matrices must be n x n");
    }
    if (!a.allFinite()) {
      throw InvalidInputError("SwitchedSystem: mode matrix has non-finite entries");
    }
  }
  if (pmf_.size() != static_cast<Eigen::Index>(modes_.size())) {
    throw InvalidInputError("SwitchedSystem: pmf length must equal mode count");
  }
  for (Eigen::Index i = 0; i < pmf_.size(); ++i) {
    if (!(pmf_(i) > 0.0) || !std::isfinite(pmf_(i))) {
      throw InvalidInputError("SwitchedSystem: every switch probability must be > 0");
    }
  }
  if (std::abs(pmf_.sum() - 1.0) > 1e-12) {
    throw InvalidInputError("SwitchedSystem: switch probabilities must sum to 1");
  }
  if (x0_.size() == 0) {
    x0_ = Vec::Zero(n_);
  }
  if (x0_.size() != n_ || !x0_.allFinite()) {
    throw InvalidInputError("SwitchedSystem: x0 must be a finite n-vector");
  }

  std::uint64_t h = kFnvOffset;
  const std::uint64_t dims[2] = {static_cast<std::uint64_t>(n_),
                                 static_cast<std::uint64_t>(modes_.size())};
  h = fnv1a(dims, sizeof(dims), h);
  for (const Mat& a : modes_) h = hash_matrix(a, h);
  for (Eigen::Index i = 0; i < pmf_.size(); ++i) h = hash_double(pmf_(i), h);
  for (Eigen::Index i = 0; i < x0_.size(); ++i) h = hash_double(x0_(i), h);
  hash_ = h;
}

const char* to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::GaussianIid: return "gaussian_iid";
    case NoiseKind::StudentTIid: return "student_t_iid";
    case NoiseKind::ScheduledGaussian: return "scheduled_gaussian";
  }
  return "?";
}

NoiseKind noise_kind_from_string(const std::string& name) {
  if (name == "gaussian_iid") return NoiseKind::GaussianIid;
  if (name == "student_t_iid") return NoiseKind::StudentTIid;
  if (name == "scheduled_gaussian") return NoiseKind::ScheduledGaussian;
  throw InvalidInputError("unknown noise kind: " + name);
}

NoiseModel::NoiseModel(NoiseKind kind, Mat cov, double dof,
                       std::vector<double> schedule)
    : kind_(kind), cov_(std::move(cov)), dof_(dof), schedule_(std::move(schedule)) {
  if (cov_.rows() < 1 || cov_.rows() != cov_.cols() || !cov_.allFinite()) {
    throw InvalidInputError("NoiseModel: covariance must be a finite square matrix");
  }
  const double scale = std::max(cov_.cwiseAbs().maxCoeff(), 1.0);
  if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw InvalidInputError("NoiseModel: covariance must be symmetric");
  }
  Eigen::LLT<Mat> llt(cov_);
  if (llt.info() != Eigen::Success) {
    throw InvalidInputError("NoiseModel: covariance must be positive definite");
  }
  chol_ = llt.matrixL();
  if (kind_ == NoiseKind::StudentTIid && !(dof_ > 2.0)) {
    throw InvalidInputError("NoiseModel: student_t needs dof > 2");
  }
  if (kind_ == NoiseKind::ScheduledGaussian) {
    if (schedule_.empty()) {
      throw InvalidInputError("NoiseModel: scheduled_gaussian needs a schedule");
    }
    for (double s : schedule_) {
      if (!(s > 0.0) || !std::isfinite(s)) {
        throw InvalidInputError("NoiseModel: schedule scalings must be in (0, inf)");
      }
    }
  }
}

NoiseModel NoiseModel::gaussian(Mat covariance) {
  return NoiseModel(NoiseKind::GaussianIid, std::move(covariance), 0.0, {});
}

NoiseModel NoiseModel::student_t(Mat covariance, double dof) {
  return NoiseModel(NoiseKind::StudentTIid, std::move(covariance), dof, {});
}

NoiseModel NoiseModel::scheduled_gaussian(Mat covariance, std::vector<double> schedule) {
  return NoiseModel(NoiseKind::ScheduledGaussian, std::move(covariance), 0.0,
                    std::move(schedule));
}

double NoiseModel::schedule_at(long t) const {
  if (kind_ != NoiseKind::ScheduledGaussian) return 1.0;
  const size_t m = schedule_.size();
  return schedule_[static_cast<size_t>(((t % static_cast<long>(m)) +
                                        static_cast<long>(m)) %
                                       static_cast<long>(m))];
}

Vec NoiseModel::sample(long t, std::mt19937_64& stream) const {
  const Eigen::Index n = dim();
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(stream);
  Vec w = chol_ * z;
  switch (kind_) {
    case NoiseKind::GaussianIid:
      return w;
    case NoiseKind::ScheduledGaussian:
      return std::sqrt(schedule_at(t)) * w;
    case NoiseKind::StudentTIid: {
      // w = L z sqrt((dof-2)/V), V ~ chi2(dof), gives Cov(w) = C exactly.
      std::chi_squared_distribution<double> chi2(dof_);
      const double v = chi2(stream);
      return w * std::sqrt((dof_ - 2.0) / v);
    }
  }
  return w;
}

Trajectory roll_out(const SwitchedSystem& sys, const std::vector<int>& switches,
                    const Mat& noises) {
  const Eigen::Index n = sys.state_dim();
  const long horizon = static_cast<long>(switches.size());
  if (horizon < 1) {
    throw InvalidInputError("roll_out: horizon must be >= 1");
  }
  if (noises.rows() != n || noises.cols() != horizon) {
    throw InvalidInputError("roll_out: noises must be n x horizon");
  }
  for (int s : switches) {
    if (s < 0 || s >= sys.mode_count()) {
      throw InvalidInputError("roll_out: mode index out of range");
    }
  }

  Trajectory traj;
  traj.system_hash = sys.hash();
  traj.states.resize(n, horizon + 1);
  traj.switches = switches;
  traj.noises = noises;
  traj.states.col(0) = sys.x0();
  for (long t = 0; t < horizon; ++t) {
    traj.states.col(t + 1) = sys.mode(switches[static_cast<size_t>(t)]) *
                                 traj.states.col(t) +
                             noises.col(t);
    if (traj.states.col(t + 1).cwiseAbs().maxCoeff() > kStateOverflowGuard) {
      throw InstabilityError(
          "state overflow at t = " + std::to_string(t + 1) +
              " (|x| > 1e150); the switched system is diverging",
          t + 1);
    }
  }
  return traj;
}

Trajectory simulate(const SwitchedSystem& sys, const NoiseModel& noise,
                    long horizon, std::uint64_t seed) {
  if (horizon < 1) {
    throw InvalidInputError("simulate: horizon must be >= 1");
  }
  if (noise.dim() != sys.state_dim()) {
    throw InvalidInputError("simulate: noise dimension must match the system");
  }
  std::mt19937_64 stream(seed);
  const Vec& pmf = sys.switch_pmf();

  std::vector<int> switches(static_cast<size_t>(horizon));
  Mat noises(sys.state_dim(), horizon);
  for (long t = 0; t < horizon; ++t) {
    const double u = uniform01(stream);
    double cum = 0.0;
    int s = sys.mode_count() - 1;
    for (int i = 0; i < sys.mode_count(); ++i) {
      cum += pmf(i);
      if (u < cum) {
        s = i;
        break;
      }
    }
    switches[static_cast<size_t>(t)] = s;
    noises.col(t) = noise.sample(t, stream);
  }

  Trajectory traj = roll_out(sys, switches, noises);
  traj.seed = seed;
  return traj;
}

Mat transition_product(const std::vector<int>& switches, const SwitchedSystem& sys,
                       long t, long tau) {
  const Eigen::Index n = sys.state_dim();
  if (t < tau) {
    return Mat::Identity(n, n);
  }
  if (tau < 0 || t >= static_cast<long>(switches.size())) {
    throw InvalidInputError("transition_product: index out of range");
  }
  Mat prod = sys.mode(switches[static_cast<size_t>(tau)]);
  for (long j = tau + 1; j <= t; ++j) {
    prod = sys.mode(switches[static_cast<size_t>(j)]) * prod;
  }
  return prod;
}

double assumption2_margin(const SwitchedSystem& sys) {
  double margin = 1.0;
  for (int i = 0; i < sys.mode_count(); ++i) {
    margin *= std::pow(spectral_norm(sys.mode(i)), sys.switch_pmf()(i));
  }
  return margin;
}

double mss_radius(const SwitchedSystem& sys) {
  const Eigen::Index n = sys.state_dim();
  Mat acc = Mat::Zero(n * n, n * n);
  for (int i = 0; i < sys.mode_count(); ++i) {
    acc += sys.switch_pmf()(i) * kron(sys.mode(i), sys.mode(i));
  }
  return max_abs_eig(acc);
}

void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  const Eigen::Index n = traj.state_dim();
  const long horizon = traj.horizon();
  char head[128];
  std::snprintf(head, sizeof(head), "# swsysid trajectory system_hash=%016llx seed=%llu\n",
                static_cast<unsigned long long>(traj.system_hash),
                static_cast<unsigned long long>(traj.seed));
  out << head;
  out << "t,s_t";
  for (Eigen::Index i = 1; i <= n; ++i) out << ",x_" << i;
  for (Eigen::Index i = 1; i <= n; ++i) out << ",w_" << i;
  out << "\n";
  for (long t = 0; t <= horizon; ++t) {
    out << t << ",";
    if (t < horizon) out << traj.switches[static_cast<size_t>(t)] + 1;
    for (Eigen::Index i = 0; i < n; ++i) out << "," << fmt_g17(traj.states(i, t));
    for (Eigen::Index i = 0; i < n; ++i) {
      out << ",";
      if (t < horizon) out << fmt_g17(traj.noises(i, t));
    }
    out << "\n";
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace

Trajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  std::uint64_t system_hash = 0;
  std::uint64_t seed = 0;
  // Optional provenance comment, then the header.
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      unsigned long long h = 0, s = 0;
      if (std::sscanf(line.c_str(), "# swsysid trajectory system_hash=%llx seed=%llu",
                      &h, &s) == 2) {
        system_hash = h;
        seed = s;
      }
      continue;
    }
    break;
  }
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "t" || header[1] != "s_t") {
    throw InvalidInputError("trajectory csv: malformed header");
  }
  const size_t n = (header.size() - 2) / 2;
  if (header.size() != 2 + 2 * n) {
    throw InvalidInputError("trajectory csv: header must carry x_1..x_n,w_1..w_n");
  }

  std::vector<int> switches;
  std::vector<Vec> states;
  std::vector<Vec> noises;
  long expected_t = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw InvalidInputError("trajectory csv: row has wrong column count");
    }
    const long t = std::stol(cells[0]);
    if (t != expected_t) {
      throw InvalidInputError(
          "trajectory csv: time indices must be 0,1,2,... without duplicates");
    }
    ++expected_t;
    Vec x(static_cast<Eigen::Index>(n));
    for (size_t i = 0; i < n; ++i) x(static_cast<Eigen::Index>(i)) = std::stod(cells[2 + i]);
    states.push_back(std::move(x));
    const bool final_row = cells[1].empty();
    if (!final_row) {
      const int s = std::stoi(cells[1]);
      if (s < 1) throw InvalidInputError("trajectory csv: mode index must be >= 1");
      switches.push_back(s - 1);
      Vec w(static_cast<Eigen::Index>(n));
      for (size_t i = 0; i < n; ++i) {
        w(static_cast<Eigen::Index>(i)) = std::stod(cells[2 + n + i]);
      }
      noises.push_back(std::move(w));
    }
  }
  if (states.size() < 2 || switches.size() + 1 != states.size()) {
    throw InvalidInputError("trajectory csv: need T steps plus a final state row");
  }

  Trajectory traj;
  traj.system_hash = system_hash;
  traj.seed = seed;
  traj.switches = std::move(switches);
  traj.states.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(states.size()));
  for (size_t t = 0; t < states.size(); ++t) {
    traj.states.col(static_cast<Eigen::Index>(t)) = states[t];
  }
  traj.noises.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(noises.size()));
  for (size_t t = 0; t < noises.size(); ++t) {
    traj.noises.col(static_cast<Eigen::Index>(t)) = noises[t];
  }
  return traj;
}

}  // namespace swsysid
