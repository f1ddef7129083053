#include "ddcmix/model.hpp"

#include <cmath>
#include <stdexcept>

#include "ddcmix/logit.hpp"

namespace ddcmix {

CCPProfile::CCPProfile(int num_types, int num_firms, int num_states, int num_actions)
    : m_(num_types), j_(num_firms), x_(num_states), a_(num_actions) {
  if (m_ < 1 || j_ < 1 || x_ < 1 || a_ < 1)
    throw std::invalid_argument("CCPProfile: all dimensions must be positive");
  p_.assign(static_cast<std::size_t>(m_) * j_, Eigen::MatrixXd::Zero(x_, a_));
}

CCPProfile CCPProfile::uniform(int num_types, int num_firms, int num_states, int num_actions) {
  CCPProfile p(num_types, num_firms, num_states, num_actions);
  for (auto& mat : p.p_) mat.setConstant(1.0 / num_actions);
  return p;
}

void CCPProfile::validate(double tol) const {
  for (const auto& mat : p_) {
    for (Eigen::Index i = 0; i < mat.rows(); ++i) {
      if (std::abs(mat.row(i).sum() - 1.0) > tol)
        throw std::invalid_argument("CCPProfile: slice does not sum to 1");
      if ((mat.row(i).array() < kCcpFloor * (1.0 - 1e-6)).any())
        throw std::invalid_argument("CCPProfile: entry below the probability floor");
    }
  }
}

Eigen::VectorXd CCPProfile::flatten() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(m_) * j_ * x_ * a_);
  Eigen::Index off = 0;
  for (const auto& mat : p_) {
    for (Eigen::Index i = 0; i < mat.rows(); ++i)
      for (Eigen::Index c = 0; c < mat.cols(); ++c) v(off++) = mat(i, c);
  }
  return v;
}

void CCPProfile::unflatten(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() != static_cast<Eigen::Index>(m_) * j_ * x_ * a_)
    throw std::invalid_argument("CCPProfile::unflatten: length mismatch");
  Eigen::Index off = 0;
  for (auto& mat : p_) {
    for (Eigen::Index i = 0; i < mat.rows(); ++i)
      for (Eigen::Index c = 0; c < mat.cols(); ++c) mat(i, c) = v(off++);
  }
}

void CCPProfile::floor_and_renormalize() {
  for (auto& mat : p_) {
    mat = mat.array().max(kCcpFloor);
    for (Eigen::Index i = 0; i < mat.rows(); ++i) mat.row(i) /= mat.row(i).sum();
  }
}

void PanelData::validate(int num_states, int num_actions) const {
  if (states.rows() != num_markets || states.cols() != num_periods)
    throw std::invalid_argument("PanelData: states matrix has the wrong shape");
  if (static_cast<int>(actions.size()) != num_firms)
    throw std::invalid_argument("PanelData: expected " + std::to_string(num_firms) +
                                " per-firm action matrices, got " + std::to_string(actions.size()));
  if ((states.array() < 0).any() || (states.array() >= num_states).any())
    throw std::invalid_argument("PanelData: state_index out of range");
  for (const auto& a : actions) {
    if (a.rows() != num_markets || a.cols() != num_periods)
      throw std::invalid_argument("PanelData: action matrix has the wrong shape");
    if ((a.array() < 0).any() || (a.array() >= num_actions).any())
      throw std::invalid_argument("PanelData: action out of range");
  }
}

MixtureDDCModel::MixtureDDCModel(Config cfg) : cfg_(std::move(cfg)) {
  const int j = cfg_.space.num_firms();
  if (cfg_.num_types < 1) throw std::invalid_argument("MixtureDDCModel: need at least one type");
  if (static_cast<int>(cfg_.basis.size()) != j)
    throw std::invalid_argument("MixtureDDCModel: one basis matrix per firm required");
  const Eigen::Index rows = static_cast<Eigen::Index>(cfg_.space.size()) * cfg_.space.num_joint_actions();
  const Eigen::Index d = cfg_.basis.front().cols();
  for (const auto& b : cfg_.basis)
    if (b.rows() != rows || b.cols() != d)
      throw std::invalid_argument("MixtureDDCModel: basis shape mismatch");
  if (!(cfg_.beta > 0.0 && cfg_.beta < 1.0))
    throw std::invalid_argument("MixtureDDCModel: discount factor must lie in (0, 1)");
  if (cfg_.kernel.size() != cfg_.space.size())
    throw std::invalid_argument("MixtureDDCModel: kernel and state space sizes disagree");
  if (cfg_.kernel.num_joint_actions() != cfg_.space.num_joint_actions())
    throw std::invalid_argument("MixtureDDCModel: kernel joint-action count mismatch");
  cfg_.kernel.validate_stochastic(1e-10);

  if (static_cast<int>(cfg_.type_params.size()) != cfg_.num_types)
    throw std::invalid_argument("MixtureDDCModel: one parameter vector per type required");
  for (const auto& t : cfg_.type_params)
    if (t.size() != d) throw std::invalid_argument("MixtureDDCModel: type parameter length mismatch");
  if (cfg_.type_weights.size() != cfg_.num_types)
    throw std::invalid_argument("MixtureDDCModel: type weight length mismatch");
  if ((cfg_.type_weights.array() <= 0.0).any())
    throw std::invalid_argument("MixtureDDCModel: type weights must be strictly positive");
  if (std::abs(cfg_.type_weights.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("MixtureDDCModel: type weights must sum to 1");
}

}  // namespace ddcmix
