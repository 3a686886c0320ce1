#pragma once

// Small dense linear-algebra kernels used throughout the library. All of
// them are deterministic, expression-friendly free functions over Eigen
// dense types; reruns on identical inputs are bit-identical.

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <string>
#include <utility>

#include "swsysid/errors.hpp"

namespace swsysid {

// Accumulated outer products carry bounded rounding, so symmetry is
// checked relative to the largest entry.
inline constexpr double kSymmetryRelTol = 1e-9;

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* who) {
  if (m.rows() < 1 || m.cols() < 1) {
    throw InvalidInputError(std::string(who) + ": matrix must be non-empty");
  }
  if (!m.allFinite()) {
    throw InvalidInputError(std::string(who) + ": non-finite entries");
  }
}

template <typename Derived>
void require_square(const Eigen::MatrixBase<Derived>& m, const char* who) {
  if (m.rows() != m.cols()) {
    throw InvalidInputError(std::string(who) + ": matrix must be square");
  }
}

template <typename Derived>
void require_symmetric(const Eigen::MatrixBase<Derived>& m, const char* who) {
  require_square(m, who);
  using Scalar = typename Derived::Scalar;
  const Scalar scale = m.cwiseAbs().maxCoeff();
  const Scalar asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryRelTol * std::max(scale, Scalar(1))) {
    throw InvalidInputError(std::string(who) +
                            ": matrix is asymmetric beyond tolerance");
  }
}

}  // namespace detail

// Entry with the largest absolute value.
template <typename Derived>
typename Derived::Scalar max_abs_entry(const Eigen::MatrixBase<Derived>& m) {
  detail::require_finite(m, "max_abs_entry");
  return m.cwiseAbs().maxCoeff();
}

// Largest singular value. Works for rectangular inputs.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& m) {
  detail::require_finite(m, "spectral_norm");
  Eigen::JacobiSVD<typename Derived::PlainObject> svd(m);
  return svd.singularValues()(0);
}

// Smallest and largest eigenvalue of a symmetric matrix, ascending.
template <typename Derived>
std::pair<typename Derived::Scalar, typename Derived::Scalar> sym_eig_extremes(
    const Eigen::MatrixBase<Derived>& m) {
  detail::require_finite(m, "sym_eig_extremes");
  detail::require_symmetric(m, "sym_eig_extremes");
  Eigen::SelfAdjointEigenSolver<typename Derived::PlainObject> es(
      m, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return {ev(0), ev(ev.size() - 1)};
}

// Spectral radius: largest magnitude among the (possibly complex)
// eigenvalues of a square matrix.
template <typename Derived>
typename Derived::Scalar max_abs_eig(const Eigen::MatrixBase<Derived>& m) {
  detail::require_finite(m, "max_abs_eig");
  detail::require_square(m, "max_abs_eig");
  Eigen::EigenSolver<typename Derived::PlainObject> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic> kron(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  detail::require_finite(a, "kron");
  detail::require_finite(b, "kron");
  return Eigen::kroneckerProduct(a, b);
}

// Given inv = X^-1 with X symmetric positive definite, returns
// (X + v v^T)^-1 = inv - (inv v)(inv v)^T / (1 + v^T inv v).
template <typename DerivedM, typename DerivedV>
typename DerivedM::PlainObject sherman_morrison_inv_update(
    const Eigen::MatrixBase<DerivedM>& inv, const Eigen::MatrixBase<DerivedV>& v) {
  detail::require_finite(inv, "sherman_morrison_inv_update");
  detail::require_finite(v, "sherman_morrison_inv_update");
  detail::require_symmetric(inv, "sherman_morrison_inv_update");
  if (v.rows() != inv.rows() || v.cols() != 1) {
    throw InvalidInputError("sherman_morrison_inv_update: v must be an n-vector");
  }
  using Scalar = typename DerivedM::Scalar;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Vector u = inv * v;
  const Scalar denom = Scalar(1) + v.dot(u);
  if (!(denom > Scalar(0)) || !std::isfinite(static_cast<double>(denom))) {
    throw NumericalError(
        "sherman_morrison_inv_update: denominator not positive; inverse is "
        "numerically broken");
  }
  typename DerivedM::PlainObject out = inv;
  out.noalias() -= (u * u.transpose()) / denom;
  return out;
}

}  // namespace swsysid
