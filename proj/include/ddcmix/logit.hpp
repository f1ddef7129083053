#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace ddcmix {

/// Probability floor applied to every conditional choice probability so that
/// log P stays finite in likelihoods.
inline constexpr double kCcpFloor = 1e-12;

/// log sum_a exp(v_a), stabilized by the max shift.
template <typename Derived>
typename Derived::Scalar social_surplus(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (!v.allFinite()) throw std::invalid_argument("social_surplus: non-finite input");
  const Scalar m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

/// Logit choice probabilities over a vector of conditional values, floored at
/// kCcpFloor and renormalized.
template <typename Derived>
Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic> logit_ccp(
    const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (!v.allFinite()) throw std::invalid_argument("logit_ccp: non-finite input");
  const Scalar m = v.maxCoeff();
  Eigen::Vector<Scalar, Eigen::Dynamic> p = (v.array() - m).exp();
  p /= p.sum();
  p = p.array().max(Scalar(kCcpFloor));
  p /= p.sum();
  return p;
}

/// Row-wise logit: each row of v is one choice set.
inline Eigen::MatrixXd logit_ccp_rows(const Eigen::Ref<const Eigen::MatrixXd>& v) {
  Eigen::MatrixXd p(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) p.row(i) = logit_ccp(v.row(i).transpose()).transpose();
  return p;
}

/// Row-wise social surplus.
inline Eigen::VectorXd social_surplus_rows(const Eigen::Ref<const Eigen::MatrixXd>& v) {
  Eigen::VectorXd s(v.rows());
  for (Eigen::Index i = 0; i < v.rows(); ++i) s(i) = social_surplus(v.row(i).transpose());
  return s;
}

}  // namespace ddcmix
