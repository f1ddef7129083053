#include "ddcmix/bellman.hpp"

#include <numbers>

#include "ddcmix/logit.hpp"

namespace ddcmix {

Eigen::VectorXd bellman_apply(const MixtureDDCModel& model, const RivalExpectation& rx,
                              const Eigen::Ref<const Eigen::VectorXd>& theta,
                              const Eigen::Ref<const Eigen::VectorXd>& value) {
  const Eigen::MatrixXd cv = conditional_values(model, theta, value, rx);
  Eigen::VectorXd out = social_surplus_rows(cv);
  out.array() += model.discount() * std::numbers::egamma;
  return out;
}

Eigen::VectorXd bellman_apply(const MixtureDDCModel& model, int firm, int type,
                              const Eigen::Ref<const Eigen::VectorXd>& theta, const CCPProfile& p,
                              const Eigen::Ref<const Eigen::VectorXd>& value) {
  RivalExpectation rx(model, firm, type, p);
  return bellman_apply(model, rx, theta, value);
}

LinearOperator bellman_jacobian(const MixtureDDCModel& model, RxPtr rx,
                                const Eigen::Ref<const Eigen::VectorXd>& theta,
                                const Eigen::Ref<const Eigen::VectorXd>& value) {
  const Eigen::MatrixXd cv = conditional_values(model, theta, value, *rx);
  auto ccp = std::make_shared<Eigen::MatrixXd>(logit_ccp_rows(cv));
  const int na = model.num_actions();
  const double beta = model.discount();
  return LinearOperator(model.num_states(),
                        [rx, ccp, na, beta](const Eigen::Ref<const Eigen::VectorXd>& u) {
                          Eigen::VectorXd out = Eigen::VectorXd::Zero(u.size());
                          for (int a = 0; a < na; ++a)
                            out.noalias() += ccp->col(a).cwiseProduct(rx->apply_f(a, u));
                          return Eigen::VectorXd(beta * out);
                        });
}

void bellman_apply_with_sensitivity(const MixtureDDCModel& model, const RivalExpectation& rx,
                                    const Eigen::Ref<const Eigen::VectorXd>& theta,
                                    const Eigen::Ref<const Eigen::VectorXd>& value,
                                    const Eigen::Ref<const Eigen::MatrixXd>& dvalue,
                                    Eigen::VectorXd* value_next, Eigen::MatrixXd* dvalue_next) {
  const int nx = model.num_states();
  const int na = model.num_actions();
  const int d = model.num_params();
  const double beta = model.discount();
  const Eigen::MatrixXd cv = conditional_values(model, theta, value, rx);
  const Eigen::MatrixXd ccp = logit_ccp_rows(cv);

  *value_next = social_surplus_rows(cv);
  value_next->array() += beta * std::numbers::egamma;

  // dV'(x)/dtheta = sum_a P(a|x) [phi_bar(x,a) + beta (F^a dV)(x)]
  dvalue_next->setZero(nx, d);
  for (int a = 0; a < na; ++a) {
    Eigen::MatrixXd cont = rx.apply_f_cols(a, dvalue);  // nx x d
    for (int x = 0; x < nx; ++x) {
      dvalue_next->row(x) +=
          ccp(x, a) * (rx.phi_bar().row(static_cast<Eigen::Index>(x) * na + a) + beta * cont.row(x));
    }
  }
}

}  // namespace ddcmix
