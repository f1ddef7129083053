#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <functional>
#include <stdexcept>

#include "ddcmix/dgp.hpp"
#include "ddcmix/logit.hpp"
#include "ddcmix/rng.hpp"
#include "ddcmix/types.hpp"

namespace ddcmix {

namespace {

struct Var {
  double mean = 0.0;
  double scale = 1.0;
  bool binary = false;
};

}  // namespace

Eigen::MatrixXd state_poly_features(const MixtureDDCModel& model, int degree) {
  if (degree < 1) throw std::invalid_argument("state_poly_features: degree must be >= 1");
  const auto& sp = model.space();
  const int nx = model.num_states();

  // Base variables: one digit per firm's lagged action, then each exogenous
  // component standardized over its grid.
  const int nvars = sp.num_firms() + sp.num_exo_components();
  std::vector<Var> vars(nvars);
  Eigen::MatrixXd raw(nx, nvars);
  for (int x = 0; x < nx; ++x) {
    for (int j = 0; j < sp.num_firms(); ++j) raw(x, j) = sp.firm_action(sp.lag_of(x), j);
    for (int k = 0; k < sp.num_exo_components(); ++k)
      raw(x, sp.num_firms() + k) = sp.exo_value(sp.exo_of(x), k);
  }
  for (int j = 0; j < sp.num_firms(); ++j) vars[j].binary = true;
  for (int k = 0; k < sp.num_exo_components(); ++k) {
    const auto& g = sp.exo_grid(k);
    Var& v = vars[sp.num_firms() + k];
    v.mean = g.mean();
    v.scale = std::max(1e-12, std::sqrt((g.array() - v.mean).square().mean()));
  }
  for (int c = 0; c < nvars; ++c)
    if (!vars[c].binary) raw.col(c) = (raw.col(c).array() - vars[c].mean) / vars[c].scale;

  // Monomials of total degree <= degree; repeated binary factors collapse, so
  // skip exponents above one for binary variables.
  std::vector<std::vector<int>> monomials;  // sorted variable index lists
  std::vector<int> current;
  const std::function<void(int, int)> enumerate = [&](int start, int remaining) {
    monomials.push_back(current);
    if (remaining == 0) return;
    for (int v = start; v < nvars; ++v) {
      if (vars[v].binary && !current.empty() && current.back() == v) continue;
      current.push_back(v);
      enumerate(v, remaining - 1);
      current.pop_back();
    }
  };
  enumerate(0, degree);

  Eigen::MatrixXd feats = Eigen::MatrixXd::Ones(nx, static_cast<Eigen::Index>(monomials.size()));
  for (std::size_t c = 0; c < monomials.size(); ++c)
    for (int v : monomials[c]) feats.col(c).array() *= raw.col(v).array();
  return feats;
}

namespace {

/// Weighted multinomial logit over states: counts(x, a) are weighted
/// observation counts, feats(x, :) the sieve basis, action 0 normalized.
/// Returns coefficients K x (A-1).
Eigen::MatrixXd fit_weighted_logit(const Eigen::MatrixXd& feats, const Eigen::MatrixXd& counts,
                                   Eigen::MatrixXd alpha, double grad_tol = 1e-7,
                                   int max_iters = 100) {
  const Eigen::Index nx = feats.rows();
  const Eigen::Index kdim = feats.cols();
  const Eigen::Index na = counts.cols();
  const Eigen::Index nfree = na - 1;
  if (alpha.rows() != kdim || alpha.cols() != nfree) alpha = Eigen::MatrixXd::Zero(kdim, nfree);

  std::vector<Eigen::Index> visited;
  for (Eigen::Index x = 0; x < nx; ++x)
    if (counts.row(x).sum() > 0.0) visited.push_back(x);
  const double total = counts.sum();
  if (total <= 0.0) return alpha;

  auto eval = [&](const Eigen::MatrixXd& a, Eigen::MatrixXd* grad, Eigen::MatrixXd* hess) {
    double ll = 0.0;
    if (grad) grad->setZero(kdim, nfree);
    if (hess) hess->setZero(kdim * nfree, kdim * nfree);
    Eigen::VectorXd u(na), p(na);
    for (Eigen::Index x : visited) {
      u(0) = 0.0;
      u.tail(nfree) = (feats.row(x) * a).transpose();
      p = logit_ccp(u);
      const double nx_w = counts.row(x).sum();
      for (Eigen::Index act = 0; act < na; ++act)
        ll += counts(x, act) * std::log(p(act));
      if (grad) {
        for (Eigen::Index act = 1; act < na; ++act)
          grad->col(act - 1) += (counts(x, act) - nx_w * p(act)) * feats.row(x).transpose();
      }
      if (hess) {
        Eigen::MatrixXd outer = feats.row(x).transpose() * feats.row(x);
        for (Eigen::Index a1 = 1; a1 < na; ++a1)
          for (Eigen::Index a2 = 1; a2 < na; ++a2) {
            const double w = nx_w * p(a1) * ((a1 == a2 ? 1.0 : 0.0) - p(a2));
            hess->block((a1 - 1) * kdim, (a2 - 1) * kdim, kdim, kdim) -= w * outer;
          }
      }
    }
    return ll / total;
  };

  Eigen::MatrixXd grad(kdim, nfree), hess(kdim * nfree, kdim * nfree);
  double ll = eval(alpha, &grad, &hess);
  for (int it = 0; it < max_iters; ++it) {
    const double gn = grad.lpNorm<Eigen::Infinity>() / total;
    if (gn <= grad_tol) break;
    Eigen::MatrixXd neg_h = -hess / total;
    neg_h.diagonal().array() += 1e-10;
    Eigen::VectorXd gvec(kdim * nfree);
    for (Eigen::Index c = 0; c < nfree; ++c) gvec.segment(c * kdim, kdim) = grad.col(c) / total;
    Eigen::VectorXd dir = neg_h.ldlt().solve(gvec);
    double stepsize = 1.0;
    bool improved = false;
    for (int bt = 0; bt < 40; ++bt) {
      Eigen::MatrixXd cand = alpha;
      for (Eigen::Index c = 0; c < nfree; ++c)
        cand.col(c) += stepsize * dir.segment(c * kdim, kdim);
      const double cand_ll = eval(cand, nullptr, nullptr);
      if (cand_ll > ll - 1e-14) {
        alpha = std::move(cand);
        improved = true;
        break;
      }
      stepsize *= 0.5;
    }
    if (!improved) break;
    ll = eval(alpha, &grad, &hess);
  }
  return alpha;
}

struct KmeansResult {
  std::vector<int> labels;
  double inertia = 0.0;
};

/// One seeded k-means run; fails (nullopt) when a cluster empties.
std::optional<KmeansResult> kmeans_once(const Eigen::MatrixXd& data, int k, std::uint64_t seed,
                                        std::uint64_t attempt) {
  const Eigen::Index n = data.rows();
  Eigen::MatrixXd centers(k, data.cols());
  std::vector<int> picked;
  for (int c = 0; c < k; ++c) {
    int idx;
    std::uint64_t sub = 0;
    do {
      idx = static_cast<int>(rng_uniform(seed, 7001, attempt, c, sub++) * n);
      idx = std::min<int>(idx, static_cast<int>(n) - 1);
    } while (std::find(picked.begin(), picked.end(), idx) != picked.end() && sub < 64);
    picked.push_back(idx);
    centers.row(c) = data.row(idx);
  }

  KmeansResult out;
  out.labels.assign(n, 0);
  for (int iter = 0; iter < 200; ++iter) {
    bool changed = false;
    out.inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bestd = (data.row(i) - centers.row(0)).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double d = (data.row(i) - centers.row(c)).squaredNorm();
        if (d < bestd) {
          bestd = d;
          best = c;
        }
      }
      if (out.labels[i] != best) changed = true;
      out.labels[i] = best;
      out.inertia += bestd;
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, data.cols());
    Eigen::VectorXd cnt = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(out.labels[i]) += data.row(i);
      cnt(out.labels[i]) += 1.0;
    }
    if ((cnt.array() == 0.0).any()) return std::nullopt;
    for (int c = 0; c < k; ++c) centers.row(c) = sums.row(c) / cnt(c);
    if (!changed) break;
  }
  return out;
}

}  // namespace

SieveInit sieve_logit_init(const PanelData& data, const MixtureDDCModel& model,
                           const SieveInitConfig& config, std::uint64_t seed) {
  if (model.num_firms() != 1)
    throw ConfigError("sieve_logit_init: implemented for single-agent models; games initialize "
                      "with the frequency estimator");
  const int m = config.num_types;
  if (m < 1) throw ConfigError("sieve_logit_init: num_types must be >= 1");
  if (data.num_markets < m)
    throw ConfigError("sieve_logit_init: fewer markets than requested types");
  const int nx = model.num_states();
  const int na = model.num_actions();
  const int nmkt = data.num_markets;

  const Eigen::MatrixXd feats = state_poly_features(model, config.degree);
  const Eigen::Index kdim = feats.cols();

  // Pooled and per-market counts.
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(nx, na);
  std::vector<Eigen::MatrixXd> mkt_counts(nmkt, Eigen::MatrixXd::Zero(nx, na));
  for (int i = 0; i < nmkt; ++i)
    for (int t = 0; t < data.num_periods; ++t) {
      pooled(data.states(i, t), data.actions[0](i, t)) += 1.0;
      mkt_counts[i](data.states(i, t), data.actions[0](i, t)) += 1.0;
    }

  std::vector<Eigen::MatrixXd> alpha(m, Eigen::MatrixXd::Zero(kdim, na - 1));
  Eigen::VectorXd pi = Eigen::VectorXd::Constant(m, 1.0 / m);

  if (m == 1) {
    alpha[0] = fit_weighted_logit(feats, pooled, alpha[0]);
  } else if (config.random_init) {
    for (int t = 0; t < m; ++t)
      for (Eigen::Index r = 0; r < kdim; ++r)
        for (Eigen::Index c = 0; c < na - 1; ++c)
          alpha[t](r, c) = config.random_scale * rng_normal(seed, 9101, t, r, c);
  } else {
    // Per-market CCP estimates over pooled-visited states, shrunk one
    // observation toward the pooled CCP, stacked for k-means.
    std::vector<int> visited;
    for (int x = 0; x < nx; ++x)
      if (pooled.row(x).sum() > 0.0) visited.push_back(x);
    Eigen::MatrixXd pool_ccp(static_cast<Eigen::Index>(visited.size()), na);
    for (std::size_t v = 0; v < visited.size(); ++v)
      pool_ccp.row(v) = pooled.row(visited[v]) / pooled.row(visited[v]).sum();
    Eigen::MatrixXd points(nmkt, static_cast<Eigen::Index>(visited.size()) * na);
    for (int i = 0; i < nmkt; ++i) {
      for (std::size_t v = 0; v < visited.size(); ++v) {
        const int x = visited[v];
        const double n = mkt_counts[i].row(x).sum();
        for (int a = 0; a < na; ++a)
          points(i, v * na + a) = (mkt_counts[i](x, a) + pool_ccp(v, a)) / (n + 1.0);
      }
    }

    std::optional<KmeansResult> best;
    int reseeds = 0;
    for (int restart = 0; restart < std::max(1, config.kmeans_restarts); ++restart) {
      std::optional<KmeansResult> r;
      std::uint64_t attempt = restart;
      while (!(r = kmeans_once(points, m, seed, attempt))) {
        attempt += 1000003;  // fresh seeding for this restart
        if (++reseeds > 10)
          throw std::runtime_error("sieve_logit_init: k-means produced empty clusters after 10 "
                                   "re-seedings");
      }
      if (!best || r->inertia < best->inertia) best = r;
    }

    for (int t = 0; t < m; ++t) {
      Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(nx, na);
      int members = 0;
      for (int i = 0; i < nmkt; ++i)
        if (best->labels[i] == t) {
          counts += mkt_counts[i];
          ++members;
        }
      if (members == 0) counts = pooled;  // cannot happen after kmeans success; be safe
      alpha[t] = fit_weighted_logit(feats, counts, alpha[t]);
      pi(t) = static_cast<double>(std::max(members, 1)) / nmkt;
    }
    pi /= pi.sum();
  }

  // Reduced-form EM over sieve CCPs.
  auto grid_ccp = [&](const Eigen::MatrixXd& a) {
    Eigen::MatrixXd u(nx, na);
    u.col(0).setZero();
    u.rightCols(na - 1) = feats * a;
    return logit_ccp_rows(u);
  };

  std::vector<Eigen::MatrixXd> ccps(m);
  Eigen::MatrixXd weights(nmkt, m);
  for (int it = 0; it < config.em_max_iters; ++it) {
    for (int t = 0; t < m; ++t) ccps[t] = grid_ccp(alpha[t]);
    // E-step in log space on per-market counts.
    for (int i = 0; i < nmkt; ++i) {
      Eigen::VectorXd logw(m);
      for (int t = 0; t < m; ++t) {
        double ll = std::log(pi(t));
        for (int x = 0; x < nx; ++x)
          for (int a = 0; a < na; ++a)
            if (mkt_counts[i](x, a) > 0.0) ll += mkt_counts[i](x, a) * std::log(ccps[t](x, a));
        logw(t) = ll;
      }
      const double mx = logw.maxCoeff();
      Eigen::VectorXd w = (logw.array() - mx).exp();
      weights.row(i) = (w / w.sum()).transpose();
    }
    Eigen::VectorXd pi_new = weights.colwise().mean().transpose();
    if (m > 1) {
      for (int t = 0; t < m; ++t) {
        Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(nx, na);
        for (int i = 0; i < nmkt; ++i) counts += weights(i, t) * mkt_counts[i];
        alpha[t] = fit_weighted_logit(feats, counts, alpha[t]);
      }
    }
    const double dpi = (pi_new - pi).lpNorm<Eigen::Infinity>();
    pi = pi_new;
    if (m == 1 || dpi <= config.em_tol) break;
  }

  SieveInit out;
  out.pi = pi;
  out.ccps = CCPProfile(m, 1, nx, na);
  for (int t = 0; t < m; ++t) out.ccps.at(t, 0) = grid_ccp(alpha[t]);
  out.ccps.floor_and_renormalize();
  return out;
}

}  // namespace ddcmix
