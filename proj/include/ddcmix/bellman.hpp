#pragma once

#include <Eigen/Dense>

#include "ddcmix/policy_valuation.hpp"

namespace ddcmix {

/// One application of the smoothed Bellman operator for one firm given
/// rivals' CCPs: V'(x) = log sum_a exp(v(x,a)) + beta * kappa.
Eigen::VectorXd bellman_apply(const MixtureDDCModel& model, const RivalExpectation& rx,
                              const Eigen::Ref<const Eigen::VectorXd>& theta,
                              const Eigen::Ref<const Eigen::VectorXd>& value);

Eigen::VectorXd bellman_apply(const MixtureDDCModel& model, int firm, int type,
                              const Eigen::Ref<const Eigen::VectorXd>& theta, const CCPProfile& p,
                              const Eigen::Ref<const Eigen::VectorXd>& value);

/// u -> beta sum_a P_theta(a|x) (F^a u)(x), the Bellman Jacobian at `value`.
LinearOperator bellman_jacobian(const MixtureDDCModel& model, RxPtr rx,
                                const Eigen::Ref<const Eigen::VectorXd>& theta,
                                const Eigen::Ref<const Eigen::VectorXd>& value);

/// One Bellman step together with the forward-mode parameter sensitivity:
/// given (V, dV/dtheta) produce (V', dV'/dtheta). Used by M-steps that
/// differentiate through truncated successive approximation.
void bellman_apply_with_sensitivity(const MixtureDDCModel& model, const RivalExpectation& rx,
                                    const Eigen::Ref<const Eigen::VectorXd>& theta,
                                    const Eigen::Ref<const Eigen::VectorXd>& value,
                                    const Eigen::Ref<const Eigen::MatrixXd>& dvalue,
                                    Eigen::VectorXd* value_next, Eigen::MatrixXd* dvalue_next);

}  // namespace ddcmix
