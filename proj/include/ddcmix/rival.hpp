#pragma once

#include <Eigen/Dense>

#include "ddcmix/model.hpp"

namespace ddcmix {

/// One firm's view of the game with rivals integrated out under a CCP
/// profile: the expected utility basis over (state, own action) and the
/// expected transition applied matrix-free.
class RivalExpectation {
 public:
  RivalExpectation(const MixtureDDCModel& model, int firm, int type, const CCPProfile& p);

  /// Same, with one |X| x |A| CCP matrix per firm.
  RivalExpectation(const MixtureDDCModel& model, int firm,
                   const std::vector<Eigen::MatrixXd>& firm_ccps);

  int firm() const noexcept { return firm_; }

  /// Expected basis, row index x * |A| + own_action.
  const Eigen::MatrixXd& phi_bar() const noexcept { return phi_bar_; }

  /// Rival-profile weights w(x, r) = prod_{k != firm} P_k(a_k | x).
  const Eigen::MatrixXd& rival_weights() const noexcept { return weights_; }

  /// (F_j^a v)(x) = sum_r w(x, r) (F^{(a, r)} v)(x).
  Eigen::VectorXd apply_f(int own_action, const Eigen::Ref<const Eigen::VectorXd>& v) const;
  Eigen::MatrixXd apply_f_cols(int own_action, const Eigen::Ref<const Eigen::MatrixXd>& v) const;

  /// Dense realization of the expected transition; small models only.
  Eigen::MatrixXd dense_f(int own_action) const;

  /// Joint action index embedding (own action, rival profile index).
  int joint_action(int own_action, int rival_profile) const;
  int num_rival_profiles() const noexcept { return num_rival_; }

 private:
  const MixtureDDCModel* model_;
  int firm_;
  int num_rival_;
  Eigen::MatrixXd phi_bar_;
  Eigen::MatrixXd weights_;
};

/// v(x, a) = phi_bar(x, a)' theta + beta (F_j^a V)(x), returned as |X| x |A|.
Eigen::MatrixXd conditional_values(const MixtureDDCModel& model,
                                   const Eigen::Ref<const Eigen::VectorXd>& theta,
                                   const Eigen::Ref<const Eigen::VectorXd>& value,
                                   const RivalExpectation& rx);

/// Convenience overload that builds the RivalExpectation internally.
Eigen::MatrixXd conditional_values(const MixtureDDCModel& model,
                                   const Eigen::Ref<const Eigen::VectorXd>& theta,
                                   const Eigen::Ref<const Eigen::VectorXd>& value, int firm, int type,
                                   const CCPProfile& p);

}  // namespace ddcmix
