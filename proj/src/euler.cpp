#include "ddcmix/euler.hpp"

#include <stdexcept>

#include "ddcmix/logit.hpp"

namespace ddcmix {

EulerProblem::EulerProblem(const MixtureDDCModel& model) : model_(&model) {
  if (model.num_firms() != 1)
    throw std::invalid_argument("EulerProblem: Euler mapping requires a single-agent model");
  for (const auto& comp : model.kernel().components()) {
    if (!comp.selector.empty() || comp.mats.size() > 1)
      throw std::invalid_argument(
          "EulerProblem: exogenous transitions depend on the action, so the model lacks "
          "two-period finite dependence");
    exo_mats_.push_back(comp.mats.front());
  }

  const auto& sp = model.space();
  const int nx = model.num_states();
  const int na = model.num_actions();
  const int d = model.num_params();
  const int exo = sp.exo_size();
  const double beta = model.discount();

  // c(x,a) = phi(x,a) - phi(x,0) + beta * E_z' [phi((a,z'),0) - phi((0,z'),0)]
  c_basis_.setZero(static_cast<Eigen::Index>(nx) * na, d);
  for (int a = 0; a < na; ++a) {
    Eigen::MatrixXd dphi(exo, d);
    for (int z = 0; z < exo; ++z) {
      dphi.row(z) = model.basis(0).row(model.basis_row(sp.encode(a, z), 0)) -
                    model.basis(0).row(model.basis_row(sp.encode(0, z), 0));
    }
    Eigen::MatrixXd g = exo_mats_.empty() ? dphi : kron_matmat(exo_mats_, dphi);
    for (int x = 0; x < nx; ++x) {
      const Eigen::Index row = static_cast<Eigen::Index>(x) * na + a;
      c_basis_.row(row) = model.basis(0).row(model.basis_row(x, a)) -
                          model.basis(0).row(model.basis_row(x, 0)) + beta * g.row(sp.exo_of(x));
    }
  }
}

Eigen::MatrixXd EulerProblem::apply(const Eigen::Ref<const Eigen::VectorXd>& theta,
                                    const Eigen::Ref<const Eigen::MatrixXd>& vtilde) const {
  const auto& sp = model_->space();
  const int nx = model_->num_states();
  const int na = model_->num_actions();
  const int exo = sp.exo_size();
  const double beta = model_->discount();

  Eigen::MatrixXd surplus(exo, na);  // s_a(z') = S(vtilde(a, z'))
  for (int a = 0; a < na; ++a)
    for (int z = 0; z < exo; ++z)
      surplus(z, a) = social_surplus(vtilde.row(sp.encode(a, z)).transpose());

  Eigen::MatrixXd diff = surplus.rightCols(na - 1).colwise() - surplus.col(0);
  Eigen::MatrixXd cont = exo_mats_.empty() ? diff : kron_matmat(exo_mats_, diff);

  Eigen::MatrixXd out(nx, na);
  const Eigen::VectorXd flow = c_basis_ * theta;
  for (int x = 0; x < nx; ++x) {
    out(x, 0) = flow(static_cast<Eigen::Index>(x) * na);
    for (int a = 1; a < na; ++a)
      out(x, a) = flow(static_cast<Eigen::Index>(x) * na + a) + beta * cont(sp.exo_of(x), a - 1);
  }
  return out;
}

Eigen::MatrixXd EulerProblem::jacobian_apply(const Eigen::Ref<const Eigen::MatrixXd>& vtilde,
                                             const Eigen::Ref<const Eigen::MatrixXd>& u) const {
  const auto& sp = model_->space();
  const int nx = model_->num_states();
  const int na = model_->num_actions();
  const int exo = sp.exo_size();
  const double beta = model_->discount();

  Eigen::MatrixXd dsurplus(exo, na);
  for (int a = 0; a < na; ++a) {
    for (int z = 0; z < exo; ++z) {
      const int x = sp.encode(a, z);
      const Eigen::VectorXd q = logit_ccp(vtilde.row(x).transpose());
      dsurplus(z, a) = q.dot(u.row(x).transpose());
    }
  }
  Eigen::MatrixXd diff = dsurplus.rightCols(na - 1).colwise() - dsurplus.col(0);
  Eigen::MatrixXd cont = exo_mats_.empty() ? diff : kron_matmat(exo_mats_, diff);

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(nx, na);
  for (int x = 0; x < nx; ++x)
    for (int a = 1; a < na; ++a) out(x, a) = beta * cont(sp.exo_of(x), a - 1);
  return out;
}

void EulerProblem::apply_with_sensitivity(const Eigen::Ref<const Eigen::VectorXd>& theta,
                                          const Eigen::Ref<const Eigen::MatrixXd>& vtilde,
                                          const Eigen::Ref<const Eigen::MatrixXd>& dv,
                                          Eigen::MatrixXd* vnext, Eigen::MatrixXd* dvnext) const {
  const auto& sp = model_->space();
  const int nx = model_->num_states();
  const int na = model_->num_actions();
  const int d = model_->num_params();
  const int exo = sp.exo_size();
  const double beta = model_->discount();

  *vnext = apply(theta, vtilde);

  dvnext->setZero(static_cast<Eigen::Index>(nx) * na, d);
  std::vector<Eigen::MatrixXd> ds(na, Eigen::MatrixXd(exo, d));
  for (int a = 0; a < na; ++a) {
    for (int z = 0; z < exo; ++z) {
      const int x = sp.encode(a, z);
      const Eigen::VectorXd q = logit_ccp(vtilde.row(x).transpose());
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d);
      for (int b = 0; b < na; ++b)
        acc += q(b) * dv.row(static_cast<Eigen::Index>(x) * na + b);
      ds[a].row(z) = acc;
    }
  }
  for (int a = 1; a < na; ++a) {
    Eigen::MatrixXd diff = ds[a] - ds[0];
    Eigen::MatrixXd cont = exo_mats_.empty() ? diff : kron_matmat(exo_mats_, diff);
    for (int x = 0; x < nx; ++x) {
      const Eigen::Index row = static_cast<Eigen::Index>(x) * na + a;
      dvnext->row(row) = c_basis_.row(row) + beta * cont.row(sp.exo_of(x));
    }
  }
  for (int x = 0; x < nx; ++x)
    dvnext->row(static_cast<Eigen::Index>(x) * na) = c_basis_.row(static_cast<Eigen::Index>(x) * na);
}

Eigen::MatrixXd euler_apply(const MixtureDDCModel& model,
                            const Eigen::Ref<const Eigen::VectorXd>& theta,
                            const Eigen::Ref<const Eigen::MatrixXd>& vtilde) {
  return EulerProblem(model).apply(theta, vtilde);
}

}  // namespace ddcmix
