#include "ddcmix/policy_valuation.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ddcmix/logit.hpp"

namespace ddcmix {

namespace {

/// y -> y - beta * sum_a P(.,a) .* (F^a y), shared by both systems.
LinearOperator pv_operator(const MixtureDDCModel& model, RxPtr rx, Eigen::MatrixXd own_ccp) {
  const int nx = model.num_states();
  const int na = model.num_actions();
  const double beta = model.discount();
  auto ccp = std::make_shared<Eigen::MatrixXd>(std::move(own_ccp));
  return LinearOperator(nx, [rx, ccp, beta, na](const Eigen::Ref<const Eigen::VectorXd>& y) {
    Eigen::VectorXd out = y;
    for (int a = 0; a < na; ++a)
      out.noalias() -= beta * ccp->col(a).cwiseProduct(rx->apply_f(a, y));
    return out;
  });
}

void check_ccp_shape(const MixtureDDCModel& model, const Eigen::MatrixXd& own_ccp) {
  if (own_ccp.rows() != model.num_states() || own_ccp.cols() != model.num_actions())
    throw std::invalid_argument("policy valuation: own CCP matrix has the wrong shape");
}

}  // namespace

LinearSystem policy_valuation_system(const MixtureDDCModel& model, RxPtr rx,
                                     const Eigen::MatrixXd& own_ccp,
                                     const Eigen::Ref<const Eigen::VectorXd>& theta) {
  check_ccp_shape(model, own_ccp);
  const int nx = model.num_states();
  const int na = model.num_actions();
  const Eigen::VectorXd flow = rx->phi_bar() * theta;
  Eigen::VectorXd b = Eigen::VectorXd::Constant(nx, model.discount() * std::numbers::egamma);
  for (int x = 0; x < nx; ++x) {
    for (int a = 0; a < na; ++a) {
      const double p = std::max(own_ccp(x, a), kCcpFloor);
      b(x) += own_ccp(x, a) * (flow(static_cast<Eigen::Index>(x) * na + a) - std::log(p));
    }
  }
  return {pv_operator(model, rx, own_ccp), std::move(b)};
}

LinearSystem w_components_system(const MixtureDDCModel& model, RxPtr rx,
                                 const Eigen::MatrixXd& own_ccp) {
  if (!model.linear_utility())
    throw std::invalid_argument("w_components_system: model utility is flagged nonlinear");
  check_ccp_shape(model, own_ccp);
  const int nx = model.num_states();
  const int na = model.num_actions();
  const int d = model.num_params();
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(nx, d + 1);
  for (int x = 0; x < nx; ++x) {
    for (int a = 0; a < na; ++a) {
      const Eigen::Index row = static_cast<Eigen::Index>(x) * na + a;
      b.row(x).head(d) += own_ccp(x, a) * rx->phi_bar().row(row);
      const double p = std::max(own_ccp(x, a), kCcpFloor);
      b(x, d) -= own_ccp(x, a) * std::log(p);
    }
  }
  b.col(d).array() += model.discount() * std::numbers::egamma;
  return {pv_operator(model, rx, own_ccp), std::move(b)};
}

}  // namespace ddcmix
