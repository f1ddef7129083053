#pragma once

#include <Eigen/Dense>

#include "ddcmix/linear_operator.hpp"
#include "ddcmix/model.hpp"

namespace ddcmix {

/// Euler fixed-point mapping in conditional-value differences
/// vtilde(x, a) = v(x, a) - v(x, 0), available for single-agent models whose
/// only endogenous state is the lagged action and whose exogenous components
/// do not depend on the action (two-period finite dependence). The contraction
/// modulus is strictly below the discount factor.
class EulerProblem {
 public:
  explicit EulerProblem(const MixtureDDCModel& model);

  const MixtureDDCModel& model() const noexcept { return *model_; }

  /// c(x, a; theta) = c_basis.row(x * |A| + a) . theta (theta-free basis).
  const Eigen::MatrixXd& c_basis() const noexcept { return c_basis_; }

  /// One application of the Euler operator; vtilde is |X| x |A|.
  Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::VectorXd>& theta,
                        const Eigen::Ref<const Eigen::MatrixXd>& vtilde) const;

  /// Jacobian-vector product of the operator at vtilde.
  Eigen::MatrixXd jacobian_apply(const Eigen::Ref<const Eigen::MatrixXd>& vtilde,
                                 const Eigen::Ref<const Eigen::MatrixXd>& u) const;

  /// One step plus forward-mode parameter sensitivity; dv holds
  /// d vtilde / d theta flattened as (|X| * |A|) x d.
  void apply_with_sensitivity(const Eigen::Ref<const Eigen::VectorXd>& theta,
                              const Eigen::Ref<const Eigen::MatrixXd>& vtilde,
                              const Eigen::Ref<const Eigen::MatrixXd>& dv,
                              Eigen::MatrixXd* vnext, Eigen::MatrixXd* dvnext) const;

 private:
  const MixtureDDCModel* model_;
  Eigen::MatrixXd c_basis_;  // (|X| * |A|) x d
  std::vector<Eigen::MatrixXd> exo_mats_;
};

/// Convenience one-shot application.
Eigen::MatrixXd euler_apply(const MixtureDDCModel& model,
                            const Eigen::Ref<const Eigen::VectorXd>& theta,
                            const Eigen::Ref<const Eigen::MatrixXd>& vtilde);

}  // namespace ddcmix
