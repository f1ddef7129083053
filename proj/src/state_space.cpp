#include "ddcmix/state_space.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ddcmix/rng.hpp"

namespace ddcmix {

namespace {
int ipow(int base, int exp) {
  int r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}
}  // namespace

StateSpace::StateSpace(int num_firms, int num_actions, std::vector<Eigen::VectorXd> exo_grids)
    : num_firms_(num_firms), num_actions_(num_actions), exo_grids_(std::move(exo_grids)) {
  if (num_firms_ < 1) throw std::invalid_argument("StateSpace: need at least one firm");
  if (num_actions_ < 1) throw std::invalid_argument("StateSpace: need at least one action");
  num_joint_ = ipow(num_actions_, num_firms_);
  exo_size_ = 1;
  exo_strides_.resize(exo_grids_.size());
  for (int k = static_cast<int>(exo_grids_.size()) - 1; k >= 0; --k) {
    if (exo_grids_[k].size() == 0) throw std::invalid_argument("StateSpace: empty exogenous grid");
    exo_strides_[k] = exo_size_;
    exo_size_ *= static_cast<int>(exo_grids_[k].size());
  }
}

int StateSpace::exo_component_index(int exo_flat, int k) const {
  return (exo_flat / exo_strides_.at(k)) % static_cast<int>(exo_grids_[k].size());
}

int StateSpace::encode_exo(const std::vector<int>& idx) const {
  if (idx.size() != exo_grids_.size())
    throw std::invalid_argument("StateSpace::encode_exo: wrong number of component indices");
  int flat = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) flat += idx[k] * exo_strides_[k];
  return flat;
}

double StateSpace::exo_value(int exo_flat, int k) const {
  return exo_grids_.at(k)(exo_component_index(exo_flat, k));
}

int StateSpace::joint_action(const std::vector<int>& actions) const {
  if (static_cast<int>(actions.size()) != num_firms_)
    throw std::invalid_argument("StateSpace::joint_action: expected " + std::to_string(num_firms_) +
                                " actions, got " + std::to_string(actions.size()));
  int a = 0;
  for (int j = 0; j < num_firms_; ++j) {
    if (actions[j] < 0 || actions[j] >= num_actions_)
      throw std::invalid_argument("StateSpace::joint_action: action out of range");
    a = a * num_actions_ + actions[j];
  }
  return a;
}

int StateSpace::firm_action(int joint, int firm) const {
  int shift = ipow(num_actions_, num_firms_ - 1 - firm);
  return (joint / shift) % num_actions_;
}

TransitionKernel::TransitionKernel(int num_joint_actions, std::vector<ExoTransition> components)
    : num_joint_(num_joint_actions), comps_(std::move(components)) {
  if (num_joint_ < 1) throw std::invalid_argument("TransitionKernel: need at least one joint action");
  exo_size_ = 1;
  for (const auto& c : comps_) {
    if (c.mats.empty()) throw std::invalid_argument("TransitionKernel: component without matrices");
    const Eigen::Index l = c.mats.front().rows();
    for (const auto& m : c.mats)
      if (m.rows() != l || m.cols() != l)
        throw std::invalid_argument("TransitionKernel: component matrices must share a square shape");
    if (!c.selector.empty() && static_cast<int>(c.selector.size()) != num_joint_)
      throw std::invalid_argument("TransitionKernel: selector must cover every joint action");
    dims_.push_back(static_cast<int>(l));
    exo_size_ *= static_cast<int>(l);
  }
  if (comps_.empty()) {
    // No exogenous state: a single-cell exogenous block keeps the layout uniform.
    exo_size_ = 1;
  }
}

const Eigen::MatrixXd& TransitionKernel::mat_for(int comp, int joint_a) const {
  const auto& c = comps_[comp];
  if (c.selector.empty()) return c.mats.front();
  return c.mats.at(c.selector[joint_a]);
}

Eigen::MatrixXd TransitionKernel::apply_compact_cols(int joint_a,
                                                     const Eigen::Ref<const Eigen::MatrixXd>& v) const {
  if (joint_a < 0 || joint_a >= num_joint_)
    throw std::invalid_argument("TransitionKernel: joint action out of range");
  if (v.rows() != size())
    throw std::invalid_argument("TransitionKernel: expected length " + std::to_string(size()) +
                                ", got " + std::to_string(v.rows()));
  Eigen::MatrixXd slab = v.middleRows(static_cast<Eigen::Index>(joint_a) * exo_size_, exo_size_);
  if (comps_.empty()) return slab;

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::VectorXd cur(exo_size_), next(exo_size_);
  Eigen::MatrixXd out(exo_size_, v.cols());
  for (Eigen::Index col = 0; col < v.cols(); ++col) {
    cur = slab.col(col);
    Eigen::Index left = 1, right = exo_size_;
    for (std::size_t k = 0; k < comps_.size(); ++k) {
      const Eigen::MatrixXd& f = mat_for(static_cast<int>(k), joint_a);
      const Eigen::Index l = f.rows();
      right /= l;
      for (Eigen::Index blk = 0; blk < left; ++blk) {
        Eigen::Map<const RowMat> in(cur.data() + blk * l * right, l, right);
        Eigen::Map<RowMat> dst(next.data() + blk * l * right, l, right);
        dst.noalias() = f * in;
      }
      std::swap(cur, next);
      left *= l;
    }
    out.col(col) = cur;
  }
  return out;
}

Eigen::VectorXd TransitionKernel::apply_compact(int joint_a,
                                                const Eigen::Ref<const Eigen::VectorXd>& v) const {
  return apply_compact_cols(joint_a, v);
}

Eigen::VectorXd TransitionKernel::apply(int joint_a, const Eigen::Ref<const Eigen::VectorXd>& v) const {
  Eigen::VectorXd compact = apply_compact(joint_a, v);
  Eigen::VectorXd out(size());
  for (int lag = 0; lag < num_joint_; ++lag)
    out.segment(static_cast<Eigen::Index>(lag) * exo_size_, exo_size_) = compact;
  return out;
}

Eigen::MatrixXd TransitionKernel::dense(int joint_a) const {
  Eigen::MatrixXd exo_kron = Eigen::MatrixXd::Ones(1, 1);
  for (std::size_t k = 0; k < comps_.size(); ++k) {
    const Eigen::MatrixXd& f = mat_for(static_cast<int>(k), joint_a);
    Eigen::MatrixXd next(exo_kron.rows() * f.rows(), exo_kron.cols() * f.cols());
    for (Eigen::Index i = 0; i < exo_kron.rows(); ++i)
      for (Eigen::Index j = 0; j < exo_kron.cols(); ++j)
        next.block(i * f.rows(), j * f.cols(), f.rows(), f.cols()) = exo_kron(i, j) * f;
    exo_kron = std::move(next);
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(size(), size());
  for (int lag = 0; lag < num_joint_; ++lag)
    out.block(static_cast<Eigen::Index>(lag) * exo_size_,
              static_cast<Eigen::Index>(joint_a) * exo_size_, exo_size_, exo_size_) = exo_kron;
  return out;
}

int TransitionKernel::sample_next_exo(int exo_flat, int joint_a,
                                      const std::function<double(int)>& u01) const {
  int flat = 0;
  int rem = exo_flat;
  for (std::size_t k = 0; k < comps_.size(); ++k) {
    int stride = 1;
    for (std::size_t k2 = k + 1; k2 < comps_.size(); ++k2) stride *= dims_[k2];
    const int idx = (rem / stride) % dims_[k];
    const Eigen::MatrixXd& f = mat_for(static_cast<int>(k), joint_a);
    Eigen::VectorXd row = f.row(idx);
    const int next = rng_categorical(row.data(), dims_[k], u01(static_cast<int>(k)));
    flat += next * stride;
    rem = exo_flat;
  }
  return flat;
}

void TransitionKernel::validate_stochastic(double tol) const {
  for (const auto& c : comps_) {
    for (const auto& m : c.mats) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (std::abs(m.row(i).sum() - 1.0) > tol)
          throw std::invalid_argument("TransitionKernel: transition row does not sum to 1");
        if ((m.row(i).array() < -tol).any())
          throw std::invalid_argument("TransitionKernel: negative transition probability");
      }
    }
  }
}

}  // namespace ddcmix
