#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace ddcmix {

/// Product state space: a lagged-action profile (one |A|-ary digit per firm)
/// crossed with exogenous component grids. Flat index is row-major over
/// (lag profile, exogenous indices), the last exogenous component fastest.
class StateSpace {
 public:
  StateSpace(int num_firms, int num_actions, std::vector<Eigen::VectorXd> exo_grids);

  int num_firms() const noexcept { return num_firms_; }
  int num_actions() const noexcept { return num_actions_; }
  int num_joint_actions() const noexcept { return num_joint_; }
  int num_exo_components() const noexcept { return static_cast<int>(exo_grids_.size()); }
  int exo_size() const noexcept { return exo_size_; }
  int size() const noexcept { return num_joint_ * exo_size_; }
  const Eigen::VectorXd& exo_grid(int k) const { return exo_grids_.at(k); }

  int lag_of(int x) const { return x / exo_size_; }
  int exo_of(int x) const { return x % exo_size_; }
  int encode(int lag, int exo) const { return lag * exo_size_ + exo; }

  int exo_component_index(int exo_flat, int k) const;
  int encode_exo(const std::vector<int>& idx) const;
  double exo_value(int exo_flat, int k) const;

  /// Joint action index with firm 0 as the most significant |A|-ary digit.
  int joint_action(const std::vector<int>& actions) const;
  int firm_action(int joint, int firm) const;

 private:
  int num_firms_;
  int num_actions_;
  int num_joint_;
  int exo_size_;
  std::vector<Eigen::VectorXd> exo_grids_;
  std::vector<int> exo_strides_;
};

/// One exogenous component's transition matrices. selector maps a joint
/// action to a matrix index; an empty selector means the component ignores
/// actions and always uses mats[0].
struct ExoTransition {
  std::vector<Eigen::MatrixXd> mats;
  std::vector<int> selector;
};

/// Structured transition kernel: the lagged-action profile moves
/// deterministically to the chosen joint action while exogenous components
/// evolve independently, so F(.|x, a) factors as a Kronecker product over
/// components within the destination lag block.
class TransitionKernel {
 public:
  TransitionKernel(int num_joint_actions, std::vector<ExoTransition> components);

  int num_joint_actions() const noexcept { return num_joint_; }
  int exo_size() const noexcept { return exo_size_; }
  int size() const noexcept { return num_joint_ * exo_size_; }
  const std::vector<ExoTransition>& components() const noexcept { return comps_; }

  /// (F^a v)(x) as a function of the exogenous part only; the full apply()
  /// tiles this vector across lag blocks.
  Eigen::VectorXd apply_compact(int joint_a, const Eigen::Ref<const Eigen::VectorXd>& v) const;
  Eigen::MatrixXd apply_compact_cols(int joint_a, const Eigen::Ref<const Eigen::MatrixXd>& v) const;
  Eigen::VectorXd apply(int joint_a, const Eigen::Ref<const Eigen::VectorXd>& v) const;

  /// Dense |X| x |X| realization of F(.|., a); intended for small state spaces.
  Eigen::MatrixXd dense(int joint_a) const;

  /// Draws the next exogenous flat index; u01(k) supplies one uniform per component.
  int sample_next_exo(int exo_flat, int joint_a, const std::function<double(int)>& u01) const;

  /// Checks that every transition row sums to one within tol.
  void validate_stochastic(double tol) const;

 private:
  const Eigen::MatrixXd& mat_for(int comp, int joint_a) const;

  int num_joint_;
  int exo_size_;
  std::vector<ExoTransition> comps_;
  std::vector<int> dims_;
};

}  // namespace ddcmix
