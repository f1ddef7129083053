#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace ddcmix {

/// Matrix-free square linear map. apply() must act linearly and never mutate
/// its argument; both properties are exercised by the test suite.
class LinearOperator {
 public:
  using ApplyFn = std::function<Eigen::VectorXd(const Eigen::Ref<const Eigen::VectorXd>&)>;

  LinearOperator(Eigen::Index dim, ApplyFn apply);

  Eigen::Index dim() const noexcept { return dim_; }
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& v) const;

  static LinearOperator identity(Eigen::Index dim);
  static LinearOperator from_dense(Eigen::MatrixXd a);

 private:
  Eigen::Index dim_;
  ApplyFn apply_;
};

/// y = (F_1 ⊗ ... ⊗ F_K) v, evaluated one tensor mode at a time so the cost is
/// O(sum_k L_k * prod L) instead of O((prod L)^2). Factors must be square.
Eigen::VectorXd kron_matvec(const std::vector<Eigen::MatrixXd>& factors,
                            const Eigen::Ref<const Eigen::VectorXd>& v);

/// Column-wise kron_matvec.
Eigen::MatrixXd kron_matmat(const std::vector<Eigen::MatrixXd>& factors,
                            const Eigen::Ref<const Eigen::MatrixXd>& v);

/// Kronecker product of small square factors exposed as a LinearOperator.
class KroneckerOperator {
 public:
  explicit KroneckerOperator(std::vector<Eigen::MatrixXd> factors);

  Eigen::Index dim() const noexcept { return dim_; }
  const std::vector<Eigen::MatrixXd>& factors() const noexcept { return factors_; }
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  LinearOperator as_operator() const;

 private:
  std::vector<Eigen::MatrixXd> factors_;
  Eigen::Index dim_;
};

}  // namespace ddcmix
