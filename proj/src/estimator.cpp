#include "ddcmix/estimator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ddcmix/bellman.hpp"
#include "ddcmix/epl.hpp"
#include "ddcmix/euler.hpp"
#include "ddcmix/logit.hpp"
#include "ddcmix/rng.hpp"

namespace ddcmix {

namespace {
using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}
}  // namespace

Method method_from_string(const std::string& s) {
  if (s == "PV_GMRES") return Method::PV_GMRES;
  if (s == "PV_SA") return Method::PV_SA;
  if (s == "BM_SA") return Method::BM_SA;
  if (s == "BM_AD") return Method::BM_AD;
  if (s == "BM_NT") return Method::BM_NT;
  if (s == "EE_SA") return Method::EE_SA;
  if (s == "EPL_GMRES") return Method::EPL_GMRES;
  if (s == "PV_EPL_GMRES") return Method::PV_EPL_GMRES;
  throw ConfigError("unknown method: " + s);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::PV_GMRES: return "PV_GMRES";
    case Method::PV_SA: return "PV_SA";
    case Method::BM_SA: return "BM_SA";
    case Method::BM_AD: return "BM_AD";
    case Method::BM_NT: return "BM_NT";
    case Method::EE_SA: return "EE_SA";
    case Method::EPL_GMRES: return "EPL_GMRES";
    case Method::PV_EPL_GMRES: return "PV_EPL_GMRES";
  }
  return "?";
}

CCPProfile ccp_update(const CCPProfile& lambda, const CCPProfile& p_prev, CcpUpdateMode mode,
                      SpectralHistory& history) {
  if (mode == CcpUpdateMode::Plain) {
    CCPProfile out = lambda;
    out.floor_and_renormalize();
    return out;
  }
  const Eigen::VectorXd pf = p_prev.flatten();
  const Eigen::VectorXd phif = pf - lambda.flatten();
  BbStep step;
  if (history.k == 0) {
    step = bb_step_size(Eigen::VectorXd::Zero(0), Eigen::VectorXd::Zero(0), 0, phif.norm());
  } else {
    step = bb_step_size(pf - history.p_prev, phif - history.phi_prev, history.k, phif.norm());
  }
  history.p_prev = pf;
  history.phi_prev = phif;
  ++history.k;
  CCPProfile out = p_prev;
  out.unflatten(pf - step.alpha * phif);
  out.floor_and_renormalize();
  return out;
}

LabelMatch match_labels(const std::vector<Eigen::VectorXd>& theta_hat,
                        const Eigen::Ref<const Eigen::VectorXd>& pi_hat,
                        const std::vector<Eigen::VectorXd>& theta_star,
                        const Eigen::Ref<const Eigen::VectorXd>& pi_star) {
  const int m = static_cast<int>(theta_star.size());
  if (static_cast<int>(theta_hat.size()) != m || pi_hat.size() != m || pi_star.size() != m)
    throw std::invalid_argument("match_labels: type count mismatch");
  if (m > 8) throw std::invalid_argument("match_labels: exhaustive search supports M <= 8");

  std::vector<int> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  LabelMatch best;
  best.mse = std::numeric_limits<double>::infinity();
  do {
    double mse = 0.0;
    for (int t = 0; t < m; ++t) {
      mse += (theta_hat[perm[t]] - theta_star[t]).squaredNorm();
      const double dpi = pi_hat(perm[t]) - pi_star(t);
      mse += dpi * dpi;
    }
    if (mse < best.mse) {
      best.mse = mse;
      best.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

namespace {

// ---------------------------------------------------------------------------
// Shared M-step accumulation: weighted multinomial logit terms at values u
// with parameter sensitivities du (exact for affine routes, propagated or
// implicit for the nonlinear ones).
// ---------------------------------------------------------------------------

struct LogitAccum {
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  double total = 0.0;

  explicit LogitAccum(int d) : grad(Eigen::VectorXd::Zero(d)), hess(Eigen::MatrixXd::Zero(d, d)) {}

  /// counts: (n_visited x A) weighted counts; u: |X| x A values; du: rows
  /// (x * A + a) x d sensitivities; visited: state id per slot.
  void add(const Eigen::MatrixXd& counts, const std::vector<int>& visited,
           const Eigen::MatrixXd& u, const Eigen::MatrixXd& du, bool want_derivs) {
    const int na = static_cast<int>(u.cols());
    const int d = static_cast<int>(grad.size());
    Eigen::VectorXd p(na);
    Eigen::MatrixXd zrow(na, d);
    for (std::size_t s = 0; s < visited.size(); ++s) {
      const int x = visited[s];
      const double n_x = counts.row(s).sum();
      if (n_x == 0.0) continue;
      total += n_x;
      const Eigen::RowVectorXd urow = u.row(x);
      const double mx = urow.maxCoeff();
      double lse = 0.0;
      for (int a = 0; a < na; ++a) lse += std::exp(urow(a) - mx);
      lse = mx + std::log(lse);
      for (int a = 0; a < na; ++a) value += counts(s, a) * (urow(a) - lse);
      if (!want_derivs) continue;
      for (int a = 0; a < na; ++a) {
        p(a) = std::exp(urow(a) - lse);
        zrow.row(a) = du.row(static_cast<Eigen::Index>(x) * na + a);
      }
      Eigen::RowVectorXd zbar = p.transpose() * zrow;
      for (int a = 0; a < na; ++a) grad += counts(s, a) * zrow.row(a).transpose();
      grad -= n_x * zbar.transpose();
      Eigen::MatrixXd second = Eigen::MatrixXd::Zero(d, d);
      for (int a = 0; a < na; ++a)
        second.noalias() += p(a) * zrow.row(a).transpose() * zrow.row(a);
      second.noalias() -= zbar.transpose() * zbar;
      hess.noalias() -= n_x * second;
    }
  }

  void finalize(double* value_out, Eigen::VectorXd* grad_out, Eigen::MatrixXd* hess_out) const {
    const double scale = total > 0.0 ? total : 1.0;
    if (value_out) *value_out = value / scale;
    if (grad_out) *grad_out = grad / scale;
    if (hess_out) *hess_out = hess / scale;
  }
};

int fixed_point_cap(int q, Eigen::Index dim, bool newton) {
  if (q != kInfIters) return q;
  return newton ? 100 : static_cast<int>(100 * dim);
}

// ---------------------------------------------------------------------------
// Route drivers
// ---------------------------------------------------------------------------

class RouteDriver {
 public:
  virtual ~RouteDriver() = default;
  virtual SolverReport begin_iteration(const CCPProfile& p_prev,
                                       const std::vector<Eigen::VectorXd>& theta_prev,
                                       bool first) = 0;
  virtual MStepObjective mstep_objective(int type, const std::vector<Eigen::MatrixXd>& counts,
                                         const std::vector<std::vector<int>>& visited) = 0;
  virtual CCPProfile finish_iteration(const std::vector<Eigen::VectorXd>& theta_new,
                                      const CCPProfile& p_prev) = 0;
  virtual Eigen::VectorXd value_view() const = 0;
  virtual std::vector<NuisanceBlock> nuisance_blocks() const = 0;
  virtual std::optional<std::vector<AffineValues>> affine_values() const { return std::nullopt; }
};

/// Policy-valuation route on the theta-free W systems (PV_GMRES / PV_SA).
class WRoute : public RouteDriver {
 public:
  WRoute(const MixtureDDCModel& model, const EstimatorOptions& opt, InnerAlgorithm alg)
      : model_(model), opt_(opt), alg_(alg) {
    const int m = model.num_types();
    const int nf = model.num_firms();
    const int nx = model.num_states();
    const int d = model.num_params();
    w_.assign(static_cast<std::size_t>(m) * nf, Eigen::MatrixXd::Zero(nx, d + 1));
    z_.assign(static_cast<std::size_t>(m) * nf,
              Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nx) * model.num_actions(), d));
    off_.assign(static_cast<std::size_t>(m) * nf,
                Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nx) * model.num_actions()));
    rx_.resize(static_cast<std::size_t>(m) * nf);
    theta_last_.assign(m, Eigen::VectorXd::Zero(d));
  }

  SolverReport begin_iteration(const CCPProfile& p_prev,
                               const std::vector<Eigen::VectorXd>& /*theta_prev*/,
                               bool first) override {
    const int m = model_.num_types();
    const int nf = model_.num_firms();
    const int na = model_.num_actions();
    const int nx = model_.num_states();
    const int d = model_.num_params();
    const double beta = model_.discount();
    SolverReport agg;
    agg.converged = true;
    for (int type = 0; type < m; ++type) {
      for (int j = 0; j < nf; ++j) {
        const std::size_t idx = static_cast<std::size_t>(type) * nf + j;
        if (nf > 1 || !rx_[idx])
          rx_[idx] = std::make_shared<const RivalExpectation>(model_, j, type, p_prev);
        FixedPointProblem prob;
        prob.kind = FixedPointProblem::Kind::WComponents;
        prob.theta_separable = true;
        prob.linear = w_components_system(model_, rx_[idx], p_prev.at(type, j));
        GammaSolver gamma =
            make_gamma(prob, alg_, first ? kInfIters : opt_.q, opt_.inner_tol, opt_.anderson_memory);
        auto [w_new, rep] = gamma(w_[idx]);
        w_[idx] = std::move(w_new);
        agg.iterations_used = std::max(agg.iterations_used, rep.iterations_used);
        agg.final_residual_norm = std::max(agg.final_residual_norm, rep.final_residual_norm);
        agg.converged = agg.converged && rep.converged;

        // Composite features: z = phi_bar + beta F^a W_{1..d}, offset beta F^a W_P.
        for (int a = 0; a < na; ++a) {
          const Eigen::MatrixXd fw = rx_[idx]->apply_f_cols(a, w_[idx]);
          for (int x = 0; x < nx; ++x) {
            const Eigen::Index row = static_cast<Eigen::Index>(x) * na + a;
            z_[idx].row(row) = rx_[idx]->phi_bar().row(row) + beta * fw.row(x).head(d);
            off_[idx](row) = beta * fw(x, d);
          }
        }
      }
    }
    return agg;
  }

  MStepObjective mstep_objective(int type, const std::vector<Eigen::MatrixXd>& counts,
                                 const std::vector<std::vector<int>>& visited) override {
    MStepObjective obj;
    obj.dim = model_.num_params();
    const int nf = model_.num_firms();
    const int na = model_.num_actions();
    const int nx = model_.num_states();
    obj.eval = [this, type, &counts, &visited, nf, na, nx](const Eigen::VectorXd& theta,
                                                           double* value, Eigen::VectorXd* grad,
                                                           Eigen::MatrixXd* hess) {
      LogitAccum acc(static_cast<int>(theta.size()));
      for (int j = 0; j < nf; ++j) {
        const std::size_t idx = static_cast<std::size_t>(type) * nf + j;
        Eigen::MatrixXd u(nx, na);
        Eigen::VectorXd flat = z_[idx] * theta + off_[idx];
        for (int x = 0; x < nx; ++x)
          for (int a = 0; a < na; ++a) u(x, a) = flat(static_cast<Eigen::Index>(x) * na + a);
        acc.add(counts[j], visited[j], u, z_[idx], grad != nullptr || hess != nullptr);
      }
      acc.finalize(value, grad, hess);
    };
    return obj;
  }

  CCPProfile finish_iteration(const std::vector<Eigen::VectorXd>& theta_new,
                              const CCPProfile& p_prev) override {
    theta_last_ = theta_new;
    const int m = model_.num_types();
    const int nf = model_.num_firms();
    const int na = model_.num_actions();
    const int nx = model_.num_states();
    CCPProfile lambda(m, nf, nx, na);
    for (int type = 0; type < m; ++type)
      for (int j = 0; j < nf; ++j) {
        const std::size_t idx = static_cast<std::size_t>(type) * nf + j;
        Eigen::VectorXd flat = z_[idx] * theta_new[type] + off_[idx];
        Eigen::MatrixXd u(nx, na);
        for (int x = 0; x < nx; ++x)
          for (int a = 0; a < na; ++a) u(x, a) = flat(static_cast<Eigen::Index>(x) * na + a);
        lambda.at(type, j) = logit_ccp_rows(u);
      }
    (void)p_prev;
    return lambda;
  }

  Eigen::VectorXd value_view() const override {
    const int m = model_.num_types();
    const int nf = model_.num_firms();
    const int nx = model_.num_states();
    const int d = model_.num_params();
    Eigen::VectorXd v(static_cast<Eigen::Index>(m) * nf * nx);
    Eigen::Index off = 0;
    for (int type = 0; type < m; ++type)
      for (int j = 0; j < nf; ++j) {
        const std::size_t idx = static_cast<std::size_t>(type) * nf + j;
        v.segment(off, nx) = w_[idx].leftCols(d) * theta_last_[type] + w_[idx].col(d);
        off += nx;
      }
    return v;
  }

  std::vector<NuisanceBlock> nuisance_blocks() const override {
    const int nf = model_.num_firms();
    std::vector<NuisanceBlock> out(model_.num_types());
    for (int type = 0; type < model_.num_types(); ++type) {
      out[type].kind = NuisanceBlock::Kind::WComponents;
      for (int j = 0; j < nf; ++j)
        out[type].payload.push_back(w_[static_cast<std::size_t>(type) * nf + j]);
    }
    return out;
  }

  std::optional<std::vector<AffineValues>> affine_values() const override {
    const int nf = model_.num_firms();
    std::vector<AffineValues> out(model_.num_types());
    for (int type = 0; type < model_.num_types(); ++type)
      for (int j = 0; j < nf; ++j) {
        const std::size_t idx = static_cast<std::size_t>(type) * nf + j;
        out[type].z.push_back(z_[idx]);
        out[type].offset.push_back(off_[idx]);
      }
    return out;
  }

 private:
  const MixtureDDCModel& model_;
  EstimatorOptions opt_;
  InnerAlgorithm alg_;
  std::vector<std::shared_ptr<const RivalExpectation>> rx_;
  std::vector<Eigen::MatrixXd> w_;
  std::vector<Eigen::MatrixXd> z_;
  std::vector<Eigen::VectorXd> off_;
  std::vector<Eigen::VectorXd> theta_last_;
};

/// Bellman route (BM_SA / BM_AD / BM_NT). The M-step differentiates through
/// the truncated inner solve: exactly for SA, via the implicit-function
/// derivative at the inner output for Newton/Anderson.
class BellmanRoute : public RouteDriver {
 public:
  BellmanRoute(const MixtureDDCModel& model, const EstimatorOptions& opt, InnerAlgorithm alg)
      : model_(model), opt_(opt), alg_(alg) {
    const int m = model.num_types();
    const int nf = model.num_firms();
    const int nx = model.num_states();
    const int d = model.num_params();
    v_.assign(static_cast<std::size_t>(m) * nf, Eigen::VectorXd::Zero(nx));
    dcache_.assign(static_cast<std::size_t>(m) * nf, Eigen::MatrixXd::Zero(nx, d));
  }

  SolverReport begin_iteration(const CCPProfile& p_prev,
                               const std::vector<Eigen::VectorXd>& /*theta_prev*/,
                               bool first) override {
    first_ = first;
    const int m = model_.num_types();
    const int nf = model_.num_firms();
    rx_.assign(static_cast<std::size_t>(m) * nf, nullptr);
    for (int type = 0; type < m; ++type)
      for (int j = 0; j < nf; ++j)
        rx_[static_cast<std::size_t>(type) * nf + j] =
            std::make_shared<const RivalExpectation>(model_, j, type, p_prev);
    SolverReport rep;
    rep.converged = true;  // the truncated solve happens inside the M-step
    return rep;
  }

  /// Runs the truncated inner solve for (type, firm) at theta from the stored
  /// warm start, returning the value and its theta-sensitivity.
  void gamma_with_sensitivity(int type, int firm, const Eigen::VectorXd& theta,
                              Eigen::VectorXd* v_out, Eigen::MatrixXd* d_out,
                              SolverReport* rep_out) const {
    const std::size_t idx = static_cast<std::size_t>(type) * model_.num_firms() + firm;
    const RivalExpectation& rx = *rx_[idx];
    const int nx = model_.num_states();
    const int d = model_.num_params();
    const int cap = fixed_point_cap(first_ ? kInfIters : opt_.q, nx, alg_ == InnerAlgorithm::Newton);

    if (alg_ == InnerAlgorithm::SA) {
      Eigen::VectorXd v = v_[idx];
      Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(nx, d);
      SolverReport rep;
      for (int s = 1; s <= cap; ++s) {
        Eigen::VectorXd vn;
        Eigen::MatrixXd dvn;
        bellman_apply_with_sensitivity(model_, rx, theta, v, dv, &vn, &dvn);
        if (!vn.allFinite()) throw DivergenceError("bellman SA: non-finite iterate", s);
        rep.final_residual_norm = (vn - v).lpNorm<Eigen::Infinity>();
        v = std::move(vn);
        dv = std::move(dvn);
        rep.iterations_used = s;
        if (rep.final_residual_norm <= opt_.inner_tol) {
          rep.converged = true;
          break;
        }
      }
      *v_out = std::move(v);
      if (d_out) *d_out = std::move(dv);
      if (rep_out) *rep_out = rep;
      return;
    }

    // Newton / Anderson: run the inner algorithm on the value alone, then
    // recover the sensitivity from (I - dG) D = sum_a P phi_bar_a.
    auto rx_ptr = rx_[idx];
    FixedPointMap g = [this, rx_ptr, theta](const Eigen::Ref<const Eigen::VectorXd>& v) {
      return bellman_apply(model_, *rx_ptr, theta, v);
    };
    FixedPointResult r;
    if (alg_ == InnerAlgorithm::Newton) {
      JacobianFactory jac = [this, rx_ptr, theta](const Eigen::Ref<const Eigen::VectorXd>& v) {
        return bellman_jacobian(model_, rx_ptr, theta, v);
      };
      r = newton_kantorovich(g, jac, v_[idx], cap, opt_.inner_tol);
    } else {
      r = anderson_accelerate(g, v_[idx], cap, opt_.anderson_memory, opt_.inner_tol);
    }
    if (d_out) {
      const Eigen::MatrixXd cv = conditional_values(model_, theta, r.y, rx);
      const Eigen::MatrixXd ccp = logit_ccp_rows(cv);
      Eigen::MatrixXd b = Eigen::MatrixXd::Zero(nx, d);
      const int na = model_.num_actions();
      for (int a = 0; a < na; ++a)
        for (int x = 0; x < nx; ++x)
          b.row(x) += ccp(x, a) * rx.phi_bar().row(static_cast<Eigen::Index>(x) * na + a);
      LinearOperator jac = bellman_jacobian(model_, rx_ptr, theta, r.y);
      LinearOperator sys(nx, [&jac](const Eigen::Ref<const Eigen::VectorXd>& u) {
        return Eigen::VectorXd(u - jac.apply(u));
      });
      Eigen::MatrixXd dv(nx, d);
      for (int c = 0; c < d; ++c) {
        GmresResult sol = gmres(sys, b.col(c), dcache_[idx].col(c), nx, 1e-10);
        dv.col(c) = sol.y;
      }
      dcache_[idx] = dv;
      *d_out = std::move(dv);
    }
    *v_out = std::move(r.y);
    if (rep_out) *rep_out = r.report;
  }

  MStepObjective mstep_objective(int type, const std::vector<Eigen::MatrixXd>& counts,
                                 const std::vector<std::vector<int>>& visited) override {
    MStepObjective obj;
    obj.dim = model_.num_params();
    obj.eval = [this, type, &counts, &visited](const Eigen::VectorXd& theta, double* value,
                                               Eigen::VectorXd* grad, Eigen::MatrixXd* hess) {
      const bool want = grad != nullptr || hess != nullptr;
      LogitAccum acc(static_cast<int>(theta.size()));
      const int na = model_.num_actions();
      const int nx = model_.num_states();
      const int d = model_.num_params();
      for (int j = 0; j < model_.num_firms(); ++j) {
        Eigen::VectorXd v;
        Eigen::MatrixXd dv;
        gamma_with_sensitivity(type, j, theta, &v, want ? &dv : nullptr, nullptr);
        const std::size_t idx = static_cast<std::size_t>(type) * model_.num_firms() + j;
        const Eigen::MatrixXd u = conditional_values(model_, theta, v, *rx_[idx]);
        Eigen::MatrixXd du = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nx) * na, d);
        if (want) {
          // dv/dtheta of conditional values: phi_bar + beta F^a dV.
          for (int a = 0; a < na; ++a) {
            const Eigen::MatrixXd cont = rx_[idx]->apply_f_cols(a, dv);
            for (int x = 0; x < nx; ++x) {
              const Eigen::Index row = static_cast<Eigen::Index>(x) * na + a;
              du.row(row) = rx_[idx]->phi_bar().row(row) + model_.discount() * cont.row(x);
            }
          }
        }
        acc.add(counts[j], visited[j], u, du, want);
      }
      acc.finalize(value, grad, hess);
    };
    return obj;
  }

  CCPProfile finish_iteration(const std::vector<Eigen::VectorXd>& theta_new,
                              const CCPProfile& p_prev) override {
    (void)p_prev;
    const int m = model_.num_types();
    const int nf = model_.num_firms();
    CCPProfile lambda(m, nf, model_.num_states(), model_.num_actions());
    for (int type = 0; type < m; ++type)
      for (int j = 0; j < nf; ++j) {
        const std::size_t idx = static_cast<std::size_t>(type) * nf + j;
        Eigen::VectorXd v;
        SolverReport rep;
        gamma_with_sensitivity(type, j, theta_new[type], &v, nullptr, &rep);
        v_[idx] = v;
        lambda.at(type, j) = logit_ccp_rows(conditional_values(model_, theta_new[type], v, *rx_[idx]));
      }
    return lambda;
  }

  Eigen::VectorXd value_view() const override {
    const int nx = model_.num_states();
    Eigen::VectorXd out(static_cast<Eigen::Index>(v_.size()) * nx);
    for (std::size_t i = 0; i < v_.size(); ++i) out.segment(i * nx, nx) = v_[i];
    return out;
  }

  std::vector<NuisanceBlock> nuisance_blocks() const override {
    const int nf = model_.num_firms();
    std::vector<NuisanceBlock> out(model_.num_types());
    for (int type = 0; type < model_.num_types(); ++type) {
      out[type].kind = NuisanceBlock::Kind::ValueFunction;
      for (int j = 0; j < nf; ++j)
        out[type].payload.push_back(v_[static_cast<std::size_t>(type) * nf + j]);
    }
    return out;
  }

 private:
  const MixtureDDCModel& model_;
  EstimatorOptions opt_;
  InnerAlgorithm alg_;
  bool first_ = true;
  std::vector<std::shared_ptr<const RivalExpectation>> rx_;
  std::vector<Eigen::VectorXd> v_;
  mutable std::vector<Eigen::MatrixXd> dcache_;
};

/// Euler route (EE_SA), single-agent finite-dependence models.
class EulerRoute : public RouteDriver {
 public:
  EulerRoute(const MixtureDDCModel& model, const EstimatorOptions& opt)
      : model_(model), opt_(opt), problem_(model) {
    const int m = model.num_types();
    vt_.assign(m, Eigen::MatrixXd::Zero(model.num_states(), model.num_actions()));
  }

  SolverReport begin_iteration(const CCPProfile&, const std::vector<Eigen::VectorXd>&,
                               bool first) override {
    first_ = first;
    SolverReport rep;
    rep.converged = true;
    return rep;
  }

  void gamma_with_sensitivity(int type, const Eigen::VectorXd& theta, Eigen::MatrixXd* v_out,
                              Eigen::MatrixXd* d_out, SolverReport* rep_out) const {
    const int nx = model_.num_states();
    const int na = model_.num_actions();
    const int d = model_.num_params();
    const int cap = fixed_point_cap(first_ ? kInfIters : opt_.q,
                                    static_cast<Eigen::Index>(nx) * na, false);
    Eigen::MatrixXd v = vt_[type];
    Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nx) * na, d);
    SolverReport rep;
    for (int s = 1; s <= cap; ++s) {
      Eigen::MatrixXd vn, dvn;
      if (d_out) {
        problem_.apply_with_sensitivity(theta, v, dv, &vn, &dvn);
      } else {
        vn = problem_.apply(theta, v);
      }
      if (!vn.allFinite()) throw DivergenceError("euler SA: non-finite iterate", s);
      rep.final_residual_norm = (vn - v).lpNorm<Eigen::Infinity>();
      v = std::move(vn);
      if (d_out) dv = std::move(dvn);
      rep.iterations_used = s;
      if (rep.final_residual_norm <= opt_.inner_tol) {
        rep.converged = true;
        break;
      }
    }
    *v_out = std::move(v);
    if (d_out) *d_out = std::move(dv);
    if (rep_out) *rep_out = rep;
  }

  MStepObjective mstep_objective(int type, const std::vector<Eigen::MatrixXd>& counts,
                                 const std::vector<std::vector<int>>& visited) override {
    MStepObjective obj;
    obj.dim = model_.num_params();
    obj.eval = [this, type, &counts, &visited](const Eigen::VectorXd& theta, double* value,
                                               Eigen::VectorXd* grad, Eigen::MatrixXd* hess) {
      const bool want = grad != nullptr || hess != nullptr;
      Eigen::MatrixXd v, dv;
      gamma_with_sensitivity(type, theta, &v, want ? &dv : nullptr, nullptr);
      LogitAccum acc(static_cast<int>(theta.size()));
      acc.add(counts[0], visited[0], v,
              want ? dv : Eigen::MatrixXd::Zero(v.size(), theta.size()), want);
      acc.finalize(value, grad, hess);
    };
    return obj;
  }

  CCPProfile finish_iteration(const std::vector<Eigen::VectorXd>& theta_new,
                              const CCPProfile&) override {
    const int m = model_.num_types();
    CCPProfile lambda(m, 1, model_.num_states(), model_.num_actions());
    for (int type = 0; type < m; ++type) {
      Eigen::MatrixXd v;
      gamma_with_sensitivity(type, theta_new[type], &v, nullptr, nullptr);
      vt_[type] = v;
      lambda.at(type, 0) = logit_ccp_rows(v);
    }
    return lambda;
  }

  Eigen::VectorXd value_view() const override {
    const Eigen::Index block = static_cast<Eigen::Index>(model_.num_states()) * model_.num_actions();
    Eigen::VectorXd out(block * model_.num_types());
    for (int type = 0; type < model_.num_types(); ++type) {
      Eigen::Index off = block * type;
      for (int x = 0; x < model_.num_states(); ++x)
        for (int a = 0; a < model_.num_actions(); ++a)
          out(off++) = vt_[type](x, a);
    }
    return out;
  }

  std::vector<NuisanceBlock> nuisance_blocks() const override {
    std::vector<NuisanceBlock> out(model_.num_types());
    for (int type = 0; type < model_.num_types(); ++type) {
      out[type].kind = NuisanceBlock::Kind::CondValueDiff;
      out[type].payload.push_back(vt_[type]);
    }
    return out;
  }

 private:
  const MixtureDDCModel& model_;
  EstimatorOptions opt_;
  EulerProblem problem_;
  bool first_ = true;
  std::vector<Eigen::MatrixXd> vt_;
};

/// EPL route (EPL_GMRES): quasi-Newton step on the conditional-value space,
/// theta-separable via the stacked right-hand sides.
class EplRoute : public RouteDriver {
 public:
  EplRoute(const MixtureDDCModel& model, const EstimatorOptions& opt,
           std::vector<std::vector<Eigen::MatrixXd>> vtilde0)
      : model_(model), opt_(opt), vt_(std::move(vtilde0)) {
    const int m = model.num_types();
    const int d = model.num_params();
    const Eigen::Index dim =
        static_cast<Eigen::Index>(model.num_firms()) * model.num_states() * model.num_actions();
    ystack_.assign(m, Eigen::MatrixXd::Zero(dim, d + 1));
    z_.resize(m);
    off_.resize(m);
  }

  SolverReport begin_iteration(const CCPProfile& /*p_prev*/,
                               const std::vector<Eigen::VectorXd>& theta_prev,
                               bool first) override {
    const int m = model_.num_types();
    const int nf = model_.num_firms();
    const int nx = model_.num_states();
    const int na = model_.num_actions();
    const int d = model_.num_params();
    SolverReport agg;
    agg.converged = true;
    for (int type = 0; type < m; ++type) {
      EplProblem prob(model_, type, theta_prev[type], vt_[type]);
      FixedPointProblem fp;
      fp.kind = FixedPointProblem::Kind::Epl;
      fp.theta_separable = true;
      fp.linear = prob.stacked_system();
      GammaSolver gamma = make_gamma(fp, InnerAlgorithm::GMRES, first ? kInfIters : opt_.q,
                                     opt_.inner_tol, opt_.anderson_memory);
      auto [y_new, rep] = gamma(ystack_[type]);
      ystack_[type] = std::move(y_new);
      agg.iterations_used = std::max(agg.iterations_used, rep.iterations_used);
      agg.final_residual_norm = std::max(agg.final_residual_norm, rep.final_residual_norm);
      agg.converged = agg.converged && rep.converged;

      // v(theta) = vtilde - Y0 - Y_{1..d} theta, firm by firm.
      z_[type].z.clear();
      z_[type].offset.clear();
      const Eigen::VectorXd base = prob.vtilde_stacked() - ystack_[type].col(0);
      for (int j = 0; j < nf; ++j) {
        const Eigen::Index start = static_cast<Eigen::Index>(j) * nx * na;
        z_[type].z.push_back(-ystack_[type].block(start, 1, static_cast<Eigen::Index>(nx) * na, d));
        z_[type].offset.push_back(base.segment(start, static_cast<Eigen::Index>(nx) * na));
      }
      off_[type] = prob.vtilde_stacked();
    }
    return agg;
  }

  MStepObjective mstep_objective(int type, const std::vector<Eigen::MatrixXd>& counts,
                                 const std::vector<std::vector<int>>& visited) override {
    MStepObjective obj;
    obj.dim = model_.num_params();
    const int nf = model_.num_firms();
    const int na = model_.num_actions();
    const int nx = model_.num_states();
    obj.eval = [this, type, &counts, &visited, nf, na, nx](const Eigen::VectorXd& theta,
                                                           double* value, Eigen::VectorXd* grad,
                                                           Eigen::MatrixXd* hess) {
      LogitAccum acc(static_cast<int>(theta.size()));
      for (int j = 0; j < nf; ++j) {
        Eigen::VectorXd flat = z_[type].z[j] * theta + z_[type].offset[j];
        Eigen::MatrixXd u(nx, na);
        for (int x = 0; x < nx; ++x)
          for (int a = 0; a < na; ++a) u(x, a) = flat(static_cast<Eigen::Index>(x) * na + a);
        acc.add(counts[j], visited[j], u, z_[type].z[j], grad != nullptr || hess != nullptr);
      }
      acc.finalize(value, grad, hess);
    };
    return obj;
  }

  CCPProfile finish_iteration(const std::vector<Eigen::VectorXd>& theta_new,
                              const CCPProfile&) override {
    const int m = model_.num_types();
    const int nf = model_.num_firms();
    const int nx = model_.num_states();
    const int na = model_.num_actions();
    CCPProfile lambda(m, nf, nx, na);
    for (int type = 0; type < m; ++type) {
      for (int j = 0; j < nf; ++j) {
        Eigen::VectorXd flat = z_[type].z[j] * theta_new[type] + z_[type].offset[j];
        Eigen::MatrixXd v(nx, na);
        for (int x = 0; x < nx; ++x)
          for (int a = 0; a < na; ++a) v(x, a) = flat(static_cast<Eigen::Index>(x) * na + a);
        vt_[type][j] = v;
        lambda.at(type, j) = logit_ccp_rows(v);
      }
    }
    return lambda;
  }

  Eigen::VectorXd value_view() const override {
    std::vector<Eigen::VectorXd> stacks;
    Eigen::Index total = 0;
    for (const auto& v : vt_) {
      stacks.push_back(stack_firm_values(v));
      total += stacks.back().size();
    }
    Eigen::VectorXd out(total);
    Eigen::Index off = 0;
    for (const auto& s : stacks) {
      out.segment(off, s.size()) = s;
      off += s.size();
    }
    return out;
  }

  std::vector<NuisanceBlock> nuisance_blocks() const override {
    std::vector<NuisanceBlock> out(model_.num_types());
    for (int type = 0; type < model_.num_types(); ++type) {
      out[type].kind = NuisanceBlock::Kind::CondValues;
      out[type].payload = vt_[type];
    }
    return out;
  }

  std::optional<std::vector<AffineValues>> affine_values() const override { return z_; }

 private:
  const MixtureDDCModel& model_;
  EstimatorOptions opt_;
  std::vector<std::vector<Eigen::MatrixXd>> vt_;  // per type, per firm |X| x |A|
  std::vector<Eigen::MatrixXd> ystack_;
  std::vector<AffineValues> z_;
  std::vector<Eigen::VectorXd> off_;
};

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

struct DataCaches {
  std::vector<MarketCounts> markets;
  std::vector<std::vector<int>> visited;  // per firm
  std::vector<std::vector<int>> slot;     // per firm: state -> slot or -1
};

DataCaches build_caches(const MixtureDDCModel& model, const PanelData& data) {
  DataCaches c;
  c.markets = build_market_counts(data);
  c.visited.resize(model.num_firms());
  c.slot.assign(model.num_firms(), std::vector<int>(model.num_states(), -1));
  for (const auto& mkt : c.markets)
    for (const auto& o : mkt.obs)
      if (c.slot[o.firm][o.state] < 0) {
        c.slot[o.firm][o.state] = static_cast<int>(c.visited[o.firm].size());
        c.visited[o.firm].push_back(o.state);
      }
  return c;
}

std::vector<Eigen::MatrixXd> weighted_counts(const DataCaches& c, const Eigen::MatrixXd& w,
                                             int type, int num_firms, int num_actions) {
  std::vector<Eigen::MatrixXd> out(num_firms);
  for (int j = 0; j < num_firms; ++j)
    out[j] = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(c.visited[j].size()), num_actions);
  for (std::size_t i = 0; i < c.markets.size(); ++i) {
    const double wi = w(static_cast<Eigen::Index>(i), type);
    for (const auto& o : c.markets[i].obs) out[o.firm](c.slot[o.firm][o.state], o.action) += wi * o.count;
  }
  return out;
}

std::unique_ptr<RouteDriver> make_driver(const MixtureDDCModel& model,
                                         const EstimatorOptions& opt,
                                         std::vector<std::vector<Eigen::MatrixXd>> epl_vtilde) {
  switch (opt.method) {
    case Method::PV_GMRES:
      return std::make_unique<WRoute>(model, opt, InnerAlgorithm::GMRES);
    case Method::PV_SA:
      return std::make_unique<WRoute>(model, opt, InnerAlgorithm::SA);
    case Method::BM_SA:
      return std::make_unique<BellmanRoute>(model, opt, InnerAlgorithm::SA);
    case Method::BM_AD:
      return std::make_unique<BellmanRoute>(model, opt, InnerAlgorithm::Anderson);
    case Method::BM_NT:
      return std::make_unique<BellmanRoute>(model, opt, InnerAlgorithm::Newton);
    case Method::EE_SA:
      return std::make_unique<EulerRoute>(model, opt);
    case Method::EPL_GMRES:
      return std::make_unique<EplRoute>(model, opt, std::move(epl_vtilde));
    case Method::PV_EPL_GMRES:
      throw ConfigError("PV_EPL_GMRES is dispatched before driver construction");
  }
  throw ConfigError("unknown method");
}

/// One preliminary policy-valuation pass producing (theta0, vtilde0) for the
/// EPL route, mirroring the one-step CCP estimation used to initialize
/// quasi-Newton estimators.
void epl_bootstrap(const MixtureDDCModel& model, const DataCaches& caches,
                   const EstimationInit& init, const EstimatorOptions& opt,
                   std::vector<Eigen::VectorXd>* theta0,
                   std::vector<std::vector<Eigen::MatrixXd>>* vtilde0) {
  EstimatorOptions wopt = opt;
  wopt.method = Method::PV_GMRES;
  wopt.q = kInfIters;
  WRoute w(model, wopt, InnerAlgorithm::GMRES);
  EStepResult es = e_step_counts(init.p0, init.pi0, caches.markets);
  std::vector<Eigen::VectorXd> dummy(model.num_types(),
                                     Eigen::VectorXd::Zero(model.num_params()));
  w.begin_iteration(init.p0, dummy, true);
  theta0->resize(model.num_types());
  vtilde0->assign(model.num_types(), {});
  for (int type = 0; type < model.num_types(); ++type) {
    auto counts = weighted_counts(caches, es.weights.values, type, model.num_firms(),
                                  model.num_actions());
    MStepObjective obj = w.mstep_objective(type, counts, caches.visited);
    Eigen::VectorXd start = type < static_cast<int>(init.theta0.size()) && init.theta0[type].size()
                                ? init.theta0[type]
                                : Eigen::VectorXd::Zero(model.num_params());
    (*theta0)[type] = m_step(obj, start, opt.mstep_grad_tol, opt.mstep_max_iters).theta;
  }
  auto affine = w.affine_values();
  for (int type = 0; type < model.num_types(); ++type) {
    const AffineValues& av = (*affine)[type];
    const int nx = model.num_states();
    const int na = model.num_actions();
    for (int j = 0; j < model.num_firms(); ++j) {
      Eigen::VectorXd flat = av.z[j] * (*theta0)[type] + av.offset[j];
      Eigen::MatrixXd v(nx, na);
      for (int x = 0; x < nx; ++x)
        for (int a = 0; a < na; ++a) v(x, a) = flat(static_cast<Eigen::Index>(x) * na + a);
      (*vtilde0)[type].push_back(std::move(v));
    }
  }
}

EstimationResult run_engine(const MixtureDDCModel& model, const PanelData& data,
                            const EstimationInit& init, const EstimatorOptions& opt) {
  const auto t0 = Clock::now();
  const int m = model.num_types();
  data.validate(model.num_states(), model.num_actions());
  init.p0.validate();
  if (init.p0.num_types() != m || init.p0.num_firms() != model.num_firms() ||
      init.p0.num_states() != model.num_states() || init.p0.num_actions() != model.num_actions())
    throw std::invalid_argument("em_npl_q_run: initial CCP profile shape mismatch");
  if (init.pi0.size() != m) throw std::invalid_argument("em_npl_q_run: pi0 length mismatch");
  if ((init.pi0.array() <= 0.0).any() || std::abs(init.pi0.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("em_npl_q_run: pi0 must be strictly positive and sum to 1");

  DataCaches caches = build_caches(model, data);

  std::vector<Eigen::VectorXd> theta(m, Eigen::VectorXd::Zero(model.num_params()));
  for (int type = 0; type < std::min<int>(m, static_cast<int>(init.theta0.size())); ++type)
    if (init.theta0[type].size() == model.num_params()) theta[type] = init.theta0[type];

  std::vector<std::vector<Eigen::MatrixXd>> epl_vtilde;
  if (opt.method == Method::EPL_GMRES) {
    if (!model.linear_utility())
      throw ConfigError("EPL_GMRES requires linear-in-parameters utility");
    epl_bootstrap(model, caches, init, opt, &theta, &epl_vtilde);
  }
  std::unique_ptr<RouteDriver> driver = make_driver(model, opt, std::move(epl_vtilde));

  EstimationResult result;
  CCPProfile p = init.p0;
  Eigen::VectorXd pi = init.pi0;
  Eigen::VectorXd value_prev;
  SpectralHistory spectral;
  bool converged = false;
  int k = 0;
  double last_ll = 0.0;

  try {
    for (k = 1; k <= opt.max_outer; ++k) {
      const auto it0 = Clock::now();
      EStepResult es = e_step_counts(p, pi, caches.markets);
      last_ll = es.log_pseudo_likelihood;
      driver->begin_iteration(p, theta, k == 1);

      std::vector<Eigen::VectorXd> theta_new(m);
      for (int type = 0; type < m; ++type) {
        auto counts = weighted_counts(caches, es.weights.values, type, model.num_firms(),
                                      model.num_actions());
        MStepObjective obj = driver->mstep_objective(type, counts, caches.visited);
        theta_new[type] = m_step(obj, theta[type], opt.mstep_grad_tol, opt.mstep_max_iters).theta;
      }

      CCPProfile lambda = driver->finish_iteration(theta_new, p);
      CCPProfile p_new = ccp_update(lambda, p, opt.ccp_mode, spectral);

      IterationRecord rec;
      rec.dp = (p_new.flatten() - p.flatten()).lpNorm<Eigen::Infinity>();
      rec.dtheta = 0.0;
      for (int type = 0; type < m; ++type)
        rec.dtheta = std::max(rec.dtheta,
                              (theta_new[type] - theta[type]).lpNorm<Eigen::Infinity>());
      rec.dpi = (es.pi_new - pi).lpNorm<Eigen::Infinity>();
      Eigen::VectorXd value_now = driver->value_view();
      rec.dv_rel = value_prev.size() == 0
                       ? std::numeric_limits<double>::infinity()
                       : (value_now - value_prev).lpNorm<Eigen::Infinity>() /
                             (1.0 + value_prev.lpNorm<Eigen::Infinity>());
      rec.log_pl = es.log_pseudo_likelihood;
      rec.seconds = seconds_since(it0);
      result.trace.push_back(rec);

      p = std::move(p_new);
      pi = es.pi_new;
      theta = std::move(theta_new);
      value_prev = std::move(value_now);

      if (std::max({rec.dp, rec.dtheta, rec.dv_rel, rec.dpi}) <= opt.eps_outer) {
        converged = true;
        break;
      }
    }
  } catch (const MStepError&) {
    converged = false;  // reported through the result, never thrown
  } catch (const DivergenceError&) {
    converged = false;
  }

  EStepResult final_es = e_step_counts(p, pi, caches.markets);
  result.state.pi = pi;
  result.state.theta = theta;
  result.state.nuisance = driver->nuisance_blocks();
  result.state.ccps = p;
  result.state.iteration = std::min(k, opt.max_outer);
  result.state.log_pseudo_likelihood = final_es.log_pseudo_likelihood;
  (void)last_ll;
  result.outer.iterations_used = std::min(k, opt.max_outer);
  result.outer.converged = converged;
  result.outer.final_residual_norm =
      result.trace.empty() ? std::numeric_limits<double>::infinity()
                           : std::max({result.trace.back().dp, result.trace.back().dtheta,
                                       result.trace.back().dv_rel, result.trace.back().dpi});
  result.outer.wall_time = seconds_since(t0);
  result.affine_values = driver->affine_values();
  return result;
}

}  // namespace

EstimationResult em_npl_q_run(const MixtureDDCModel& model, const PanelData& data,
                              const EstimationInit& init, const EstimatorOptions& options) {
  if (options.max_outer < 1) throw ConfigError("em_npl_q_run: max_outer must be >= 1");
  if (options.method == Method::EE_SA) {
    if (model.num_firms() != 1) throw ConfigError("EE_SA applies to single-agent models only");
  }
  if (options.method != Method::PV_EPL_GMRES) return run_engine(model, data, init, options);

  // Two-phase estimator: policy-valuation NPL solved to full inner
  // convergence, then the EPL quasi-Newton refinement at the requested q.
  EstimatorOptions phase1 = options;
  phase1.method = Method::PV_GMRES;
  phase1.q = kInfIters;
  EstimationResult r1 = run_engine(model, data, init, phase1);

  EstimationInit init2;
  init2.p0 = r1.state.ccps;
  init2.pi0 = r1.state.pi;
  init2.theta0 = r1.state.theta;
  EstimatorOptions phase2 = options;
  phase2.method = Method::EPL_GMRES;
  EstimationResult r2 = run_engine(model, data, init2, phase2);

  r2.outer.iterations_used += r1.outer.iterations_used;
  r2.outer.wall_time += r1.outer.wall_time;
  r2.trace.insert(r2.trace.begin(), r1.trace.begin(), r1.trace.end());
  r2.state.iteration = r2.outer.iterations_used;
  return r2;
}

MultiStartResult multi_start(const MixtureDDCModel& model, const PanelData& data,
                             const EstimatorOptions& options, const InitFactory& make_init,
                             int n_starts, std::uint64_t seed) {
  if (n_starts < 1) throw ConfigError("multi_start: n_starts must be >= 1");
  MultiStartResult out;
  out.start_log_pl.assign(n_starts, std::numeric_limits<double>::quiet_NaN());
  out.start_converged.assign(n_starts, false);
  std::ostringstream diag;
  bool have_best = false;
  for (int s = 0; s < n_starts; ++s) {
    const std::uint64_t sseed = derive_seed(seed, static_cast<std::uint64_t>(s));
    try {
      EstimationInit init = make_init(s, sseed);
      EstimationResult r = em_npl_q_run(model, data, init, options);
      out.start_log_pl[s] = r.state.log_pseudo_likelihood;
      out.start_converged[s] = r.outer.converged;
      diag << "start " << s << ": " << (r.outer.converged ? "converged" : "not converged")
           << ", log-pl " << r.state.log_pseudo_likelihood << ", iterations "
           << r.outer.iterations_used << "\n";
      if (r.outer.converged &&
          (!have_best || r.state.log_pseudo_likelihood > out.best.state.log_pseudo_likelihood)) {
        out.best = std::move(r);
        out.best_start = s;
        have_best = true;
      }
    } catch (const std::exception& e) {
      diag << "start " << s << ": error: " << e.what() << "\n";
    }
  }
  if (!have_best)
    throw MultiStartError("multi_start: no start converged\n" + diag.str());
  return out;
}

}  // namespace ddcmix
