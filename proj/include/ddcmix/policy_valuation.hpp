#pragma once

#include <Eigen/Dense>
#include <memory>

#include "ddcmix/linear_operator.hpp"
#include "ddcmix/rival.hpp"

namespace ddcmix {

using RxPtr = std::shared_ptr<const RivalExpectation>;

/// A linear fixed-point block (I - beta F) Y = B with one or more right-hand
/// side columns sharing the operator.
struct LinearSystem {
  LinearOperator op;
  Eigen::MatrixXd rhs;
};

/// Policy-valuation system for one firm: (I - beta F_P) V = b with
/// b(x) = sum_a P(a|x) [phi_bar(x,a)' theta - log P(a|x)] + beta * kappa.
/// The Euler-constant shift keeps this value function identical to the
/// Bellman fixed point.
LinearSystem policy_valuation_system(const MixtureDDCModel& model, RxPtr rx,
                                     const Eigen::MatrixXd& own_ccp,
                                     const Eigen::Ref<const Eigen::VectorXd>& theta);

/// The theta-free W decomposition: d_theta feature systems plus the entropy
/// system, all sharing (I - beta F_P). Column layout [W_1 .. W_d, W_P];
/// V = W_{1..d} theta + W_P reconstructs the policy-valuation solution.
LinearSystem w_components_system(const MixtureDDCModel& model, RxPtr rx,
                                 const Eigen::MatrixXd& own_ccp);

}  // namespace ddcmix
