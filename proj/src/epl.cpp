#include "ddcmix/epl.hpp"

#include <stdexcept>

#include "ddcmix/logit.hpp"

namespace ddcmix {

Eigen::VectorXd stack_firm_values(const std::vector<Eigen::MatrixXd>& values) {
  if (values.empty()) throw std::invalid_argument("stack_firm_values: empty input");
  const Eigen::Index nx = values.front().rows();
  const Eigen::Index na = values.front().cols();
  Eigen::VectorXd out(static_cast<Eigen::Index>(values.size()) * nx * na);
  Eigen::Index off = 0;
  for (const auto& v : values) {
    for (Eigen::Index x = 0; x < nx; ++x)
      for (Eigen::Index a = 0; a < na; ++a) out(off++) = v(x, a);
  }
  return out;
}

std::vector<Eigen::MatrixXd> unstack_firm_values(const Eigen::Ref<const Eigen::VectorXd>& stacked,
                                                 int num_firms, int num_states, int num_actions) {
  if (stacked.size() != static_cast<Eigen::Index>(num_firms) * num_states * num_actions)
    throw std::invalid_argument("unstack_firm_values: length mismatch");
  std::vector<Eigen::MatrixXd> out(num_firms, Eigen::MatrixXd(num_states, num_actions));
  Eigen::Index off = 0;
  for (int j = 0; j < num_firms; ++j)
    for (int x = 0; x < num_states; ++x)
      for (int a = 0; a < num_actions; ++a) out[j](x, a) = stacked(off++);
  return out;
}

struct EplProblem::Data {
  const MixtureDDCModel* model;
  int nx, na, nfirms;
  double beta;
  std::vector<Eigen::MatrixXd> ccp;        // per firm, implied by vtilde
  std::vector<RivalExpectation> rx;        // per firm, at those CCPs
  std::vector<Eigen::MatrixXd> h;          // per firm: |X| x num_joint payoff+continuation at theta_tilde
  Eigen::VectorXd vtilde_stack;
  Eigen::MatrixXd phibar_stack;            // dim x d
  Eigen::VectorXd cont_stack;              // beta F S(vtilde)

  Eigen::Index dim() const { return static_cast<Eigen::Index>(nfirms) * nx * na; }
  Eigen::Index idx(int j, int x, int a) const {
    return (static_cast<Eigen::Index>(j) * nx + x) * na + a;
  }
};

EplProblem::EplProblem(const MixtureDDCModel& model, int type,
                       const Eigen::Ref<const Eigen::VectorXd>& theta_tilde,
                       const std::vector<Eigen::MatrixXd>& vtilde) {
  auto d = std::make_shared<Data>();
  d->model = &model;
  d->nx = model.num_states();
  d->na = model.num_actions();
  d->nfirms = model.num_firms();
  d->beta = model.discount();
  (void)type;
  if (static_cast<int>(vtilde.size()) != d->nfirms)
    throw std::invalid_argument("EplProblem: one conditional-value matrix per firm required");

  d->ccp.reserve(d->nfirms);
  for (const auto& v : vtilde) {
    if (v.rows() != d->nx || v.cols() != d->na)
      throw std::invalid_argument("EplProblem: conditional-value matrix has the wrong shape");
    d->ccp.push_back(logit_ccp_rows(v));
  }
  for (int j = 0; j < d->nfirms; ++j) d->rx.emplace_back(model, j, d->ccp);

  d->vtilde_stack = stack_firm_values(vtilde);
  const int dpar = model.num_params();
  d->phibar_stack.resize(d->dim(), dpar);
  d->cont_stack.resize(d->dim());
  d->h.assign(d->nfirms, Eigen::MatrixXd(d->nx, model.num_joint_actions()));

  const auto& kern = model.kernel();
  const int exo = kern.exo_size();
  for (int j = 0; j < d->nfirms; ++j) {
    const Eigen::VectorXd surplus = social_surplus_rows(vtilde[j]);
    for (int a = 0; a < d->na; ++a) {
      Eigen::VectorXd cont = d->rx[j].apply_f(a, surplus);
      for (int x = 0; x < d->nx; ++x) {
        const Eigen::Index row = d->idx(j, x, a);
        d->phibar_stack.row(row) = d->rx[j].phi_bar().row(static_cast<Eigen::Index>(x) * d->na + a);
        d->cont_stack(row) = d->beta * cont(x);
      }
    }
    // Per-joint-profile payoff plus continuation at theta_tilde, used by the
    // rival-CCP channel of the Jacobian.
    for (int joint = 0; joint < model.num_joint_actions(); ++joint) {
      Eigen::VectorXd compact = kern.apply_compact(joint, surplus);
      for (int x = 0; x < d->nx; ++x) {
        d->h[j](x, joint) = model.basis(j).row(model.basis_row(x, joint)).dot(theta_tilde) +
                            d->beta * compact(x % exo);
      }
    }
  }
  d_ = std::move(d);
}

Eigen::Index EplProblem::dim() const noexcept { return d_->dim(); }
const Eigen::VectorXd& EplProblem::vtilde_stacked() const { return d_->vtilde_stack; }
const Eigen::MatrixXd& EplProblem::phi_bar_stacked() const { return d_->phibar_stack; }
const Eigen::VectorXd& EplProblem::continuation() const { return d_->cont_stack; }
const std::vector<Eigen::MatrixXd>& EplProblem::ccps() const { return d_->ccp; }

Eigen::VectorXd EplProblem::phi(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  return d_->phibar_stack * theta + d_->cont_stack;
}

LinearOperator EplProblem::jacobian_operator() const {
  auto d = d_;
  return LinearOperator(d->dim(), [d](const Eigen::Ref<const Eigen::VectorXd>& u) {
    const int nx = d->nx, na = d->na, nf = d->nfirms;
    // Own-CCP-weighted averages sigma_l(x) = sum_b P_l(b|x) u_l(x,b).
    Eigen::MatrixXd sigma(nx, nf);
    for (int l = 0; l < nf; ++l)
      for (int x = 0; x < nx; ++x) {
        double s = 0.0;
        for (int b = 0; b < na; ++b) s += d->ccp[l](x, b) * u(d->idx(l, x, b));
        sigma(x, l) = s;
      }

    Eigen::VectorXd out = Eigen::VectorXd::Zero(d->dim());
    for (int j = 0; j < nf; ++j) {
      // Surplus channel: beta F_j^a applied to E_{P_j}[u_j].
      for (int a = 0; a < na; ++a) {
        Eigen::VectorXd cont = d->rx[j].apply_f(a, sigma.col(j));
        for (int x = 0; x < nx; ++x) out(d->idx(j, x, a)) += d->beta * cont(x);
      }
      // Rival-CCP channel: d log prod_k P_k = sum_{l != j} (u_l(x, a_l) - sigma_l(x)).
      const int nrival = d->rx[j].num_rival_profiles();
      for (int r = 0; r < nrival; ++r) {
        const int joint0 = d->rx[j].joint_action(0, r);
        std::vector<int> rival_action(nf, -1);
        for (int l = 0; l < nf; ++l)
          if (l != j) rival_action[l] = d->model->space().firm_action(joint0, l);
        for (int x = 0; x < nx; ++x) {
          const double w = d->rx[j].rival_weights()(x, r);
          if (w == 0.0) continue;
          double delta = 0.0;
          for (int l = 0; l < nf; ++l)
            if (l != j) delta += u(d->idx(l, x, rival_action[l])) - sigma(x, l);
          const double scale = w * delta;
          for (int a = 0; a < na; ++a)
            out(d->idx(j, x, a)) += scale * d->h[j](x, d->rx[j].joint_action(a, r));
        }
      }
    }
    return out;
  });
}

LinearSystem EplProblem::system(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  LinearOperator jac = jacobian_operator();
  auto jac_ptr = std::make_shared<LinearOperator>(std::move(jac));
  LinearOperator op(d_->dim(), [jac_ptr](const Eigen::Ref<const Eigen::VectorXd>& u) {
    return Eigen::VectorXd(u - jac_ptr->apply(u));
  });
  return {std::move(op), Eigen::MatrixXd(d_->vtilde_stack - phi(theta))};
}

LinearSystem EplProblem::stacked_system() const {
  LinearOperator jac = jacobian_operator();
  auto jac_ptr = std::make_shared<LinearOperator>(std::move(jac));
  LinearOperator op(d_->dim(), [jac_ptr](const Eigen::Ref<const Eigen::VectorXd>& u) {
    return Eigen::VectorXd(u - jac_ptr->apply(u));
  });
  Eigen::MatrixXd rhs(d_->dim(), d_->model->num_params() + 1);
  rhs.col(0) = d_->vtilde_stack - d_->cont_stack;
  rhs.rightCols(d_->model->num_params()) = -d_->phibar_stack;
  return {std::move(op), std::move(rhs)};
}

LinearSystem epl_system(const MixtureDDCModel& model, int type,
                        const Eigen::Ref<const Eigen::VectorXd>& theta_tilde,
                        const std::vector<Eigen::MatrixXd>& vtilde_prev,
                        const Eigen::Ref<const Eigen::VectorXd>& theta) {
  return EplProblem(model, type, theta_tilde, vtilde_prev).system(theta);
}

}  // namespace ddcmix
