#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ddcmix/state_space.hpp"

namespace ddcmix {

/// Conditional choice probabilities P_j^m(a|x) for every (type, firm).
class CCPProfile {
 public:
  CCPProfile() = default;
  CCPProfile(int num_types, int num_firms, int num_states, int num_actions);

  static CCPProfile uniform(int num_types, int num_firms, int num_states, int num_actions);

  int num_types() const noexcept { return m_; }
  int num_firms() const noexcept { return j_; }
  int num_states() const noexcept { return x_; }
  int num_actions() const noexcept { return a_; }

  Eigen::MatrixXd& at(int type, int firm) { return p_.at(type * j_ + firm); }
  const Eigen::MatrixXd& at(int type, int firm) const { return p_.at(type * j_ + firm); }

  /// Checks each (type, firm, state) slice is a probability vector bounded
  /// away from zero by the CCP floor.
  void validate(double tol = 1e-9) const;

  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::Ref<const Eigen::VectorXd>& v);

  /// Floors every entry at the CCP floor and renormalizes each slice.
  void floor_and_renormalize();

 private:
  int m_ = 0, j_ = 0, x_ = 0, a_ = 0;
  std::vector<Eigen::MatrixXd> p_;  // index m * J + j, each |X| x |A|
};

/// Rectangular panel of observed states and per-firm actions.
struct PanelData {
  int num_markets = 0;
  int num_periods = 0;
  int num_firms = 0;
  Eigen::MatrixXi states;                 // N x T
  std::vector<Eigen::MatrixXi> actions;   // per firm, N x T

  void validate(int num_states, int num_actions) const;

  /// Columnar text round trip with header market,period,firm,state_index,action.
  void save_csv(const std::string& path) const;
  static PanelData load_csv(const std::string& path);
};

/// Full game/agent specification shared by every estimator: state space,
/// linear-in-parameters utility basis, structured transition kernel, discount
/// factor, and the generating type parameters/weights.
class MixtureDDCModel {
 public:
  struct Config {
    int num_types = 1;
    StateSpace space;
    TransitionKernel kernel;
    std::vector<Eigen::MatrixXd> basis;  // per firm: (|X| * num_joint_actions) x d_theta
    double beta = 0.95;
    std::vector<Eigen::VectorXd> type_params;
    Eigen::VectorXd type_weights;
    bool linear_utility = true;
  };

  explicit MixtureDDCModel(Config cfg);

  int num_types() const noexcept { return cfg_.num_types; }
  int num_firms() const noexcept { return cfg_.space.num_firms(); }
  int num_actions() const noexcept { return cfg_.space.num_actions(); }
  int num_joint_actions() const noexcept { return cfg_.space.num_joint_actions(); }
  int num_states() const noexcept { return cfg_.space.size(); }
  int num_params() const noexcept { return static_cast<int>(cfg_.basis.front().cols()); }
  double discount() const noexcept { return cfg_.beta; }
  bool linear_utility() const noexcept { return cfg_.linear_utility; }

  const StateSpace& space() const noexcept { return cfg_.space; }
  const TransitionKernel& kernel() const noexcept { return cfg_.kernel; }
  const Eigen::MatrixXd& basis(int firm) const { return cfg_.basis.at(firm); }
  const Eigen::VectorXd& type_params(int type) const { return cfg_.type_params.at(type); }
  const Eigen::VectorXd& type_weights() const noexcept { return cfg_.type_weights; }

  /// Basis row for (firm, state, joint action).
  Eigen::Index basis_row(int x, int joint_a) const {
    return static_cast<Eigen::Index>(x) * num_joint_actions() + joint_a;
  }

  double utility(int firm, int x, int joint_a, const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    return cfg_.basis[firm].row(basis_row(x, joint_a)).dot(theta);
  }

 private:
  Config cfg_;
};

}  // namespace ddcmix
