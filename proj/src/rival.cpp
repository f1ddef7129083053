#include "ddcmix/rival.hpp"

#include <stdexcept>
#include <vector>

namespace ddcmix {

namespace {
int ipow(int base, int exp) {
  int r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}
}  // namespace

RivalExpectation::RivalExpectation(const MixtureDDCModel& model, int firm, int type,
                                   const CCPProfile& p)
    : RivalExpectation(model, firm,
                       [&] {
                         std::vector<Eigen::MatrixXd> slices;
                         slices.reserve(model.num_firms());
                         for (int k = 0; k < model.num_firms(); ++k) slices.push_back(p.at(type, k));
                         return slices;
                       }()) {}

RivalExpectation::RivalExpectation(const MixtureDDCModel& model, int firm,
                                   const std::vector<Eigen::MatrixXd>& firm_ccps)
    : model_(&model), firm_(firm) {
  const int j = model.num_firms();
  const int na = model.num_actions();
  const int nx = model.num_states();
  const int d = model.num_params();
  if (firm < 0 || firm >= j) throw std::invalid_argument("RivalExpectation: firm out of range");
  if (static_cast<int>(firm_ccps.size()) != j)
    throw std::invalid_argument("RivalExpectation: one CCP matrix per firm required");
  num_rival_ = ipow(na, j - 1);

  // w(x, r) = prod over rivals of their CCP at the profile's action.
  weights_ = Eigen::MatrixXd::Ones(nx, num_rival_);
  for (int r = 0; r < num_rival_; ++r) {
    int rem = r;
    for (int pos = j - 2; pos >= 0; --pos) {  // position among rivals, last fastest
      const int a_k = rem % na;
      rem /= na;
      const int k = pos < firm ? pos : pos + 1;  // skip own slot
      weights_.col(r).array() *= firm_ccps[k].col(a_k).array();
    }
  }

  phi_bar_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nx) * na, d);
  const Eigen::MatrixXd& basis = model.basis(firm);
  for (int a = 0; a < na; ++a) {
    for (int r = 0; r < num_rival_; ++r) {
      const int joint = joint_action(a, r);
      for (int x = 0; x < nx; ++x) {
        phi_bar_.row(static_cast<Eigen::Index>(x) * na + a) +=
            weights_(x, r) * basis.row(model.basis_row(x, joint));
      }
    }
  }
}

int RivalExpectation::joint_action(int own_action, int rival_profile) const {
  const int j = model_->num_firms();
  const int na = model_->num_actions();
  std::vector<int> actions(j);
  actions[firm_] = own_action;
  int rem = rival_profile;
  for (int pos = j - 2; pos >= 0; --pos) {
    const int k = pos < firm_ ? pos : pos + 1;
    actions[k] = rem % na;
    rem /= na;
  }
  return model_->space().joint_action(actions);
}

Eigen::MatrixXd RivalExpectation::apply_f_cols(int own_action,
                                               const Eigen::Ref<const Eigen::MatrixXd>& v) const {
  const int nx = model_->num_states();
  const int exo = model_->kernel().exo_size();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(nx, v.cols());
  for (int r = 0; r < num_rival_; ++r) {
    const Eigen::MatrixXd compact = model_->kernel().apply_compact_cols(joint_action(own_action, r), v);
    for (int x = 0; x < nx; ++x) out.row(x) += weights_(x, r) * compact.row(x % exo);
  }
  return out;
}

Eigen::VectorXd RivalExpectation::apply_f(int own_action,
                                          const Eigen::Ref<const Eigen::VectorXd>& v) const {
  return apply_f_cols(own_action, v);
}

Eigen::MatrixXd RivalExpectation::dense_f(int own_action) const {
  const int nx = model_->num_states();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(nx, nx);
  for (int r = 0; r < num_rival_; ++r)
    out += weights_.col(r).asDiagonal() * model_->kernel().dense(joint_action(own_action, r));
  return out;
}

Eigen::MatrixXd conditional_values(const MixtureDDCModel& model,
                                   const Eigen::Ref<const Eigen::VectorXd>& theta,
                                   const Eigen::Ref<const Eigen::VectorXd>& value,
                                   const RivalExpectation& rx) {
  const int nx = model.num_states();
  const int na = model.num_actions();
  if (value.size() != nx)
    throw std::invalid_argument("conditional_values: value length must equal the state count");
  const Eigen::VectorXd flow = rx.phi_bar() * theta;
  Eigen::MatrixXd v(nx, na);
  for (int a = 0; a < na; ++a) {
    Eigen::VectorXd cont = rx.apply_f(a, value);
    for (int x = 0; x < nx; ++x) v(x, a) = flow(static_cast<Eigen::Index>(x) * na + a);
    v.col(a) += model.discount() * cont;
  }
  return v;
}

Eigen::MatrixXd conditional_values(const MixtureDDCModel& model,
                                   const Eigen::Ref<const Eigen::VectorXd>& theta,
                                   const Eigen::Ref<const Eigen::VectorXd>& value, int firm, int type,
                                   const CCPProfile& p) {
  RivalExpectation rx(model, firm, type, p);
  return conditional_values(model, theta, value, rx);
}

}  // namespace ddcmix
