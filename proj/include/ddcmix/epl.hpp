#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "ddcmix/policy_valuation.hpp"

namespace ddcmix {

/// Quasi-Newton step context on the conditional-value space, frozen at
/// (theta_tilde, vtilde): CCPs implied by vtilde, expected bases, surplus
/// continuations, and the per-joint-profile payoffs that feed the analytic
/// Jacobian. The Jacobian is only ever applied matrix-free; the stacked
/// dimension is J * |X| * |A| with index ((j * |X|) + x) * |A| + a.
class EplProblem {
 public:
  EplProblem(const MixtureDDCModel& model, int type,
             const Eigen::Ref<const Eigen::VectorXd>& theta_tilde,
             const std::vector<Eigen::MatrixXd>& vtilde);

  Eigen::Index dim() const noexcept;

  /// Phi(theta, vtilde) stacked: expected flow utility plus the surplus
  /// continuation, both under the CCPs implied by vtilde.
  Eigen::VectorXd phi(const Eigen::Ref<const Eigen::VectorXd>& theta) const;

  /// u -> grad_v Phi(theta_tilde, vtilde) u, differentiated through both the
  /// surplus continuation and the rival-CCP dependence of utilities and
  /// transitions.
  LinearOperator jacobian_operator() const;

  /// (I - grad_v Phi) Y = vtilde - Phi(theta, vtilde); solving and setting
  /// v = vtilde - Y completes the quasi-Newton step.
  LinearSystem system(const Eigen::Ref<const Eigen::VectorXd>& theta) const;

  /// Theta-free right-hand-side stack [vtilde - Phi0, -phi_bar] sharing the
  /// operator, so Y(theta) = Y.col(0) + Y.cols(1..d) * theta and the M-step
  /// sees conditional values affine in theta.
  LinearSystem stacked_system() const;

  const Eigen::VectorXd& vtilde_stacked() const;
  const Eigen::MatrixXd& phi_bar_stacked() const;   // dim x d
  const Eigen::VectorXd& continuation() const;      // beta F S(vtilde), stacked
  const std::vector<Eigen::MatrixXd>& ccps() const; // per firm, implied by vtilde

 private:
  struct Data;
  std::shared_ptr<const Data> d_;
};

/// Spec-shaped convenience wrapper returning the single-rhs system at theta.
LinearSystem epl_system(const MixtureDDCModel& model, int type,
                        const Eigen::Ref<const Eigen::VectorXd>& theta_tilde,
                        const std::vector<Eigen::MatrixXd>& vtilde_prev,
                        const Eigen::Ref<const Eigen::VectorXd>& theta);

/// Stacks per-firm |X| x |A| matrices into the EPL vector layout and back.
Eigen::VectorXd stack_firm_values(const std::vector<Eigen::MatrixXd>& values);
std::vector<Eigen::MatrixXd> unstack_firm_values(const Eigen::Ref<const Eigen::VectorXd>& stacked,
                                                 int num_firms, int num_states, int num_actions);

}  // namespace ddcmix
