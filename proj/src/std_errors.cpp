#include <cmath>
#include <stdexcept>

#include "ddcmix/estimator.hpp"
#include "ddcmix/logit.hpp"

namespace ddcmix {

namespace {

/// Per-type tables at fixed affine values: row-wise log CCPs, choice
/// probabilities, and probability-weighted feature means.
struct TypeTables {
  std::vector<Eigen::MatrixXd> logp;  // per firm |X| x |A|
  std::vector<Eigen::MatrixXd> zbar;  // per firm |X| x d
};

TypeTables build_tables(const MixtureDDCModel& model, const AffineValues& av,
                        const Eigen::VectorXd& theta) {
  const int nx = model.num_states();
  const int na = model.num_actions();
  const int d = model.num_params();
  TypeTables t;
  for (int j = 0; j < model.num_firms(); ++j) {
    Eigen::VectorXd flat = av.z[j] * theta + av.offset[j];
    Eigen::MatrixXd logp(nx, na), zbar = Eigen::MatrixXd::Zero(nx, d);
    for (int x = 0; x < nx; ++x) {
      Eigen::RowVectorXd u(na);
      for (int a = 0; a < na; ++a) u(a) = flat(static_cast<Eigen::Index>(x) * na + a);
      const double mx = u.maxCoeff();
      double lse = 0.0;
      for (int a = 0; a < na; ++a) lse += std::exp(u(a) - mx);
      lse = mx + std::log(lse);
      for (int a = 0; a < na; ++a) {
        logp(x, a) = u(a) - lse;
        zbar.row(x) += std::exp(logp(x, a)) * av.z[j].row(static_cast<Eigen::Index>(x) * na + a);
      }
    }
    t.logp.push_back(std::move(logp));
    t.zbar.push_back(std::move(zbar));
  }
  return t;
}

struct ScoreParts {
  Eigen::MatrixXd g;        // markets x (M*d): per-market type score stacked
  Eigen::MatrixXd r;        // markets x M: posterior weights
  Eigen::MatrixXd c;        // markets x M: exp(s_im) / D_i = r_im / pi_m
  double loglik = 0.0;
};

ScoreParts score_parts(const MixtureDDCModel& model, const std::vector<MarketCounts>& markets,
                       const std::vector<AffineValues>& affine,
                       const std::vector<Eigen::VectorXd>& theta, const Eigen::VectorXd& pi) {
  const int m = model.num_types();
  const int d = model.num_params();
  const int n = static_cast<int>(markets.size());
  std::vector<TypeTables> tables;
  tables.reserve(m);
  for (int type = 0; type < m; ++type) tables.push_back(build_tables(model, affine[type], theta[type]));

  ScoreParts out;
  out.g.setZero(n, m * d);
  out.r.resize(n, m);
  out.c.resize(n, m);
  Eigen::VectorXd s(m);
  for (int i = 0; i < n; ++i) {
    for (int type = 0; type < m; ++type) {
      double ll = 0.0;
      Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(d);
      const TypeTables& t = tables[type];
      const AffineValues& av = affine[type];
      for (const MarketObs& o : markets[i].obs) {
        ll += o.count * t.logp[o.firm](o.state, o.action);
        g += o.count *
             (av.z[o.firm].row(static_cast<Eigen::Index>(o.state) * model.num_actions() + o.action) -
              t.zbar[o.firm].row(o.state));
      }
      s(type) = ll;
      out.g.block(i, type * d, 1, d) = g;
    }
    Eigen::VectorXd logw = s + pi.array().log().matrix();
    const double mx = logw.maxCoeff();
    Eigen::VectorXd w = (logw.array() - mx).exp();
    const double sum = w.sum();
    out.loglik += mx + std::log(sum);
    out.r.row(i) = (w / sum).transpose();
    for (int type = 0; type < m; ++type) out.c(i, type) = out.r(i, type) / pi(type);
  }
  return out;
}

/// Analytic score over (theta^1..theta^M, pi_1..pi_{M-1}).
Eigen::VectorXd total_score(const MixtureDDCModel& model, const ScoreParts& parts) {
  const int m = model.num_types();
  const int d = model.num_params();
  const int dim = m * d + (m - 1);
  Eigen::VectorXd score = Eigen::VectorXd::Zero(dim);
  const int n = static_cast<int>(parts.r.rows());
  for (int i = 0; i < n; ++i) {
    for (int type = 0; type < m; ++type)
      score.segment(type * d, d) +=
          parts.r(i, type) * parts.g.block(i, type * d, 1, d).transpose();
    for (int f = 0; f < m - 1; ++f)
      score(m * d + f) += parts.c(i, f) - parts.c(i, m - 1);
  }
  return score;
}

}  // namespace

CovarianceResult standard_errors_linear(const MixtureDDCModel& model, const PanelData& data,
                                        const EstimationResult& result, bool fd_check) {
  if (!result.affine_values)
    throw ConfigError(
        "standard_errors_linear: the run did not produce theta-separable conditional values "
        "(use a policy-valuation or EPL route)");
  if (!model.linear_utility())
    throw ConfigError("standard_errors_linear: model utility is flagged nonlinear");
  if (!result.outer.converged)
    throw ConfigError("standard_errors_linear: estimator did not converge");

  const int m = model.num_types();
  const int d = model.num_params();
  const int na = model.num_actions();
  const int dim = m * d + (m - 1);
  const std::vector<AffineValues>& affine = *result.affine_values;
  const std::vector<Eigen::VectorXd>& theta = result.state.theta;
  const Eigen::VectorXd& pi = result.state.pi;
  std::vector<MarketCounts> markets = build_market_counts(data);
  const int n = static_cast<int>(markets.size());

  ScoreParts parts = score_parts(model, markets, affine, theta, pi);

  // State-level information of each type's logit, aggregated with posterior
  // weights: sum_i r_im H_im = -sum_{j,x} n_m(x,j) I_m(x,j).
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(dim, dim);
  for (int type = 0; type < m; ++type) {
    std::vector<TypeTables> table = {build_tables(model, affine[type], theta[type])};
    for (int j = 0; j < model.num_firms(); ++j) {
      // Weighted state visit totals under the posterior.
      Eigen::VectorXd nxj = Eigen::VectorXd::Zero(model.num_states());
      for (int i = 0; i < n; ++i)
        for (const MarketObs& o : markets[i].obs)
          if (o.firm == j) nxj(o.state) += parts.r(i, type) * o.count;
      for (int x = 0; x < model.num_states(); ++x) {
        if (nxj(x) == 0.0) continue;
        Eigen::MatrixXd info = Eigen::MatrixXd::Zero(d, d);
        for (int a = 0; a < na; ++a) {
          const double p = std::exp(table[0].logp[j](x, a));
          const Eigen::RowVectorXd z =
              affine[type].z[j].row(static_cast<Eigen::Index>(x) * na + a);
          info.noalias() += p * z.transpose() * z;
        }
        const Eigen::RowVectorXd zb = table[0].zbar[j].row(x);
        info.noalias() -= zb.transpose() * zb;
        hess.block(type * d, type * d, d, d).noalias() -= nxj(x) * info;
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    // theta-theta mixture curvature.
    for (int m1 = 0; m1 < m; ++m1) {
      const Eigen::VectorXd g1 = parts.g.block(i, m1 * d, 1, d).transpose();
      for (int m2 = 0; m2 < m; ++m2) {
        const Eigen::VectorXd g2 = parts.g.block(i, m2 * d, 1, d).transpose();
        const double w = parts.r(i, m1) * ((m1 == m2 ? 1.0 : 0.0) - parts.r(i, m2));
        hess.block(m1 * d, m2 * d, d, d).noalias() += w * g1 * g2.transpose();
      }
    }
    // pi-pi and theta-pi blocks (pi_M = 1 - sum of the free coordinates).
    for (int f1 = 0; f1 < m - 1; ++f1) {
      for (int f2 = 0; f2 < m - 1; ++f2)
        hess(m * d + f1, m * d + f2) -=
            (parts.c(i, f1) - parts.c(i, m - 1)) * (parts.c(i, f2) - parts.c(i, m - 1));
      for (int type = 0; type < m; ++type) {
        const double dr = ((type == f1 ? 1.0 : 0.0) - (type == m - 1 ? 1.0 : 0.0)) * parts.c(i, type) -
                          parts.r(i, type) * (parts.c(i, f1) - parts.c(i, m - 1));
        hess.block(type * d, m * d + f1, d, 1).noalias() +=
            dr * parts.g.block(i, type * d, 1, d).transpose();
      }
    }
  }
  // Symmetrize the theta-pi block into pi-theta.
  for (int r = 0; r < dim; ++r)
    for (int c = m * d; c < dim; ++c) hess(c, r) = hess(r, c);

  CovarianceResult out;
  if (fd_check) {
    const double h = 1e-6;
    double max_rel = 0.0;
    const double scale = hess.array().abs().maxCoeff();
    for (int k = 0; k < dim; ++k) {
      auto eval_score = [&](double shift) {
        std::vector<Eigen::VectorXd> th = theta;
        Eigen::VectorXd p2 = pi;
        if (k < m * d) {
          th[k / d](k % d) += shift;
        } else {
          const int f = k - m * d;
          p2(f) += shift;
          p2(m - 1) -= shift;
        }
        return total_score(model, score_parts(model, markets, affine, th, p2));
      };
      const Eigen::VectorXd fd = (eval_score(h) - eval_score(-h)) / (2.0 * h);
      const Eigen::VectorXd an = hess.col(k);
      max_rel = std::max(max_rel, (fd - an).lpNorm<Eigen::Infinity>() / std::max(scale, 1.0));
    }
    out.fd_max_rel_err = max_rel;
    if (max_rel > 1e-3)
      throw std::runtime_error(
          "standard_errors_linear: analytic Hessian disagrees with finite differences (rel err " +
          std::to_string(max_rel) + ")");
  }

  Eigen::MatrixXd neg_h = -hess;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_h);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw std::runtime_error(
        "standard_errors_linear: singular or indefinite Hessian; the mixture may be "
        "over-parameterized (consider fewer types)");
  out.covariance = ldlt.solve(Eigen::MatrixXd::Identity(dim, dim));
  out.std_errors = out.covariance.diagonal().array().sqrt();
  return out;
}

}  // namespace ddcmix
