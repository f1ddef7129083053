#include "ddcmix/dgp.hpp"

#include <cmath>
#include <stdexcept>

#include "ddcmix/bellman.hpp"
#include "ddcmix/logit.hpp"
#include "ddcmix/rng.hpp"
#include "ddcmix/solvers.hpp"
#include "ddcmix/tauchen.hpp"

namespace ddcmix {

EntryExitSpec EntryExitSpec::defaults() {
  EntryExitSpec s;
  s.type_params = {
      (Eigen::VectorXd(7) << 1.5, 1.5, -0.3, -0.3, -0.2, -0.3, -1.0).finished(),
      (Eigen::VectorXd(7) << 0.2, 0.2, -0.2, -3.5, -2.0, -0.5, -3.0).finished(),
      (Eigen::VectorXd(7) << 0.8, 0.8, -1.0, -1.5, -0.8, -3.0, -1.0).finished()};
  s.type_weights = (Eigen::VectorXd(3) << 0.5, 0.3, 0.2).finished();
  return s;
}

MixtureDDCModel build_entry_exit_model(const EntryExitSpec& spec) {
  if (spec.type_params.empty()) throw std::invalid_argument("entry/exit spec: no type parameters");
  for (const auto& t : spec.type_params)
    if (t.size() != 7)
      throw std::invalid_argument("entry/exit spec: type parameters must have 7 coordinates");
  if (spec.grid_points < 2) throw std::invalid_argument("entry/exit spec: grid_points must be >= 2");

  // Productivity w first, then z1..z4. z follows z' = 0.6 z + eta; the NFD
  // law adds 0.3 per unit of the current action to w's next draw.
  Ar1Spec wspec;
  wspec.intercept = 0.2;
  wspec.persistence = 0.6;
  wspec.innovation_sd = 1.0;
  wspec.grid_points = spec.grid_points;
  wspec.span_sigmas = spec.span_sigmas;
  if (!spec.finite_dependence) {
    wspec.action_shift = 0.3;
    wspec.conditioning_actions = 2;
  }
  TauchenResult w = tauchen_discretize(wspec);

  Ar1Spec zspec;
  zspec.intercept = 0.0;
  zspec.persistence = 0.6;
  zspec.innovation_sd = 1.0;
  zspec.grid_points = spec.grid_points;
  zspec.span_sigmas = spec.span_sigmas;
  TauchenResult z = tauchen_discretize(zspec);

  std::vector<Eigen::VectorXd> grids = {w.grid, z.grid, z.grid, z.grid, z.grid};
  StateSpace space(1, 2, grids);

  std::vector<ExoTransition> comps(5);
  comps[0].mats = w.transition;
  if (!spec.finite_dependence) comps[0].selector = {0, 1};  // joint action = own action
  for (int k = 1; k < 5; ++k) comps[k].mats = {z.transition[0]};
  TransitionKernel kernel(space.num_joint_actions(), std::move(comps));

  const int nx = space.size();
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nx) * 2, 7);
  for (int x = 0; x < nx; ++x) {
    const double lag = space.lag_of(x);
    const double wv = space.exo_value(space.exo_of(x), 0);
    const double z1 = space.exo_value(space.exo_of(x), 1);
    const double z2 = space.exo_value(space.exo_of(x), 2);
    const double z3 = space.exo_value(space.exo_of(x), 3);
    const double z4 = space.exo_value(space.exo_of(x), 4);
    const Eigen::Index enter = static_cast<Eigen::Index>(x) * 2 + 1;
    const double ew = std::exp(wv);
    basis(enter, 0) = ew;
    basis(enter, 1) = z1 * ew;
    basis(enter, 2) = z2 * ew;
    basis(enter, 3) = -1.0;
    basis(enter, 4) = -z3;
    basis(enter, 5) = -(1.0 - lag);
    basis(enter, 6) = -(1.0 - lag) * z4;
  }

  MixtureDDCModel::Config cfg{.num_types = static_cast<int>(spec.type_params.size()),
                              .space = std::move(space),
                              .kernel = std::move(kernel),
                              .basis = {std::move(basis)},
                              .beta = spec.beta,
                              .type_params = spec.type_params,
                              .type_weights = spec.type_weights,
                              .linear_utility = true};
  return MixtureDDCModel(std::move(cfg));
}

EntryGameSpec EntryGameSpec::defaults(int firms) {
  EntryGameSpec s;
  s.firms = firms;
  s.theta_fc = Eigen::VectorXd::LinSpaced(firms, 1.9, 1.9 - 0.1 * (firms - 1));
  s.size_grid = Eigen::VectorXd::LinSpaced(5, 1.0, 5.0);
  s.size_transition.resize(5, 5);
  s.size_transition << 0.8, 0.2, 0.0, 0.0, 0.0,  //
      0.2, 0.6, 0.2, 0.0, 0.0,                   //
      0.0, 0.2, 0.6, 0.2, 0.0,                   //
      0.0, 0.0, 0.2, 0.6, 0.2,                   //
      0.0, 0.0, 0.0, 0.2, 0.8;
  return s;
}

MixtureDDCModel build_entry_game_model(const EntryGameSpec& spec_in) {
  EntryGameSpec spec = spec_in;
  if (spec.firms < 2) throw std::invalid_argument("entry game spec: need at least 2 firms");
  if (spec.theta_fc.size() == 0)
    spec.theta_fc = Eigen::VectorXd::LinSpaced(spec.firms, 1.9, 1.9 - 0.1 * (spec.firms - 1));
  if (spec.theta_fc.size() != spec.firms)
    throw std::invalid_argument("entry game spec: one fixed cost per firm required");
  if (spec.size_grid.size() == 0) {
    EntryGameSpec d = EntryGameSpec::defaults(spec.firms);
    spec.size_grid = d.size_grid;
    spec.size_transition = d.size_transition;
  }
  if (spec.size_transition.rows() != spec.size_grid.size() ||
      spec.size_transition.cols() != spec.size_grid.size())
    throw std::invalid_argument("entry game spec: size transition shape mismatch");

  const int j = spec.firms;
  StateSpace space(j, 2, {spec.size_grid});
  std::vector<ExoTransition> comps(1);
  comps[0].mats = {spec.size_transition};
  TransitionKernel kernel(space.num_joint_actions(), std::move(comps));

  const int nx = space.size();
  const int njoint = space.num_joint_actions();
  const int d = 3 + j;  // (rs, rc, ec, fc_1..fc_J)
  std::vector<Eigen::MatrixXd> basis(
      j, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nx) * njoint, d));
  for (int x = 0; x < nx; ++x) {
    const int lag = space.lag_of(x);
    const double s = space.exo_value(space.exo_of(x), 0);
    for (int joint = 0; joint < njoint; ++joint) {
      int active = 0;
      for (int k = 0; k < j; ++k) active += space.firm_action(joint, k);
      for (int firm = 0; firm < j; ++firm) {
        if (space.firm_action(joint, firm) != 1) continue;
        const Eigen::Index row = static_cast<Eigen::Index>(x) * njoint + joint;
        basis[firm](row, 0) = s;
        basis[firm](row, 1) = -std::log(1.0 + (active - 1));
        basis[firm](row, 2) = -(1.0 - space.firm_action(lag, firm));
        basis[firm](row, 3 + firm) = -1.0;
      }
    }
  }

  Eigen::VectorXd theta(d);
  theta(0) = spec.theta_rs;
  theta(1) = spec.theta_rc;
  theta(2) = spec.theta_ec;
  theta.tail(j) = spec.theta_fc;

  MixtureDDCModel::Config cfg{.num_types = 1,
                              .space = std::move(space),
                              .kernel = std::move(kernel),
                              .basis = std::move(basis),
                              .beta = spec.beta,
                              .type_params = {std::move(theta)},
                              .type_weights = Eigen::VectorXd::Ones(1),
                              .linear_utility = true};
  return MixtureDDCModel(std::move(cfg));
}

namespace {

/// Newton solve of one firm's Bellman equation with rivals fixed.
Eigen::VectorXd solve_firm_value(const MixtureDDCModel& model, RxPtr rx,
                                 const Eigen::Ref<const Eigen::VectorXd>& theta,
                                 const Eigen::Ref<const Eigen::VectorXd>& start, double tol) {
  FixedPointMap g = [&model, rx, theta = Eigen::VectorXd(theta)](
                        const Eigen::Ref<const Eigen::VectorXd>& v) {
    return bellman_apply(model, *rx, theta, v);
  };
  JacobianFactory jac = [&model, rx, theta = Eigen::VectorXd(theta)](
                            const Eigen::Ref<const Eigen::VectorXd>& v) {
    return bellman_jacobian(model, rx, theta, v);
  };
  FixedPointResult r = newton_kantorovich(g, jac, start, 100, tol);
  if (!r.report.converged)
    throw std::runtime_error("solve_firm_value: Bellman Newton failed to reach tolerance");
  return r.y;
}

}  // namespace

TypePolicy solve_type_policy(const MixtureDDCModel& model, int type, double tol) {
  if (model.num_firms() != 1)
    throw std::invalid_argument("solve_type_policy: single-agent models only");
  CCPProfile dummy = CCPProfile::uniform(model.num_types(), 1, model.num_states(), model.num_actions());
  auto rx = std::make_shared<const RivalExpectation>(model, 0, type, dummy);
  TypePolicy out;
  out.value = solve_firm_value(model, rx, model.type_params(type),
                               Eigen::VectorXd::Zero(model.num_states()), tol);
  out.ccp = logit_ccp_rows(conditional_values(model, model.type_params(type), out.value, *rx));
  return out;
}

CCPProfile solve_game_equilibrium(const MixtureDDCModel& model, int type, const CCPProfile& start,
                                  double tol, int max_iters) {
  if (model.num_firms() < 2)
    throw std::invalid_argument("solve_game_equilibrium: games only (use solve_type_policy)");
  const int nx = model.num_states();
  const int nf = model.num_firms();
  const Eigen::VectorXd& theta = model.type_params(type);

  CCPProfile p = start;
  std::vector<Eigen::VectorXd> values(nf, Eigen::VectorXd::Zero(nx));

  auto best_response = [&](const CCPProfile& cur) {
    CCPProfile br = cur;
    for (int j = 0; j < nf; ++j) {
      auto rx = std::make_shared<const RivalExpectation>(model, j, type, cur);
      values[j] = solve_firm_value(model, rx, theta, values[j], 1e-12);
      br.at(type, j) = logit_ccp_rows(conditional_values(model, theta, values[j], *rx));
    }
    return br;
  };

  Eigen::VectorXd p_prev, phi_prev;
  double residual = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    CCPProfile lam = best_response(p);
    Eigen::VectorXd pf = p.flatten();
    Eigen::VectorXd phif = pf - lam.flatten();
    residual = phif.lpNorm<Eigen::Infinity>();
    if (residual <= tol) return p;

    BbStep step;
    if (it == 0) {
      step = bb_step_size(Eigen::VectorXd(), Eigen::VectorXd(), 0, phif.norm());
    } else {
      step = bb_step_size(pf - p_prev, phif - phi_prev, it, phif.norm());
    }
    double alpha = std::clamp(step.alpha, 0.05, 1.0);
    p_prev = pf;
    phi_prev = phif;
    Eigen::VectorXd pn = pf - alpha * phif;
    p.unflatten(pn);
    p.floor_and_renormalize();
  }
  throw std::runtime_error("solve_game_equilibrium: no equilibrium within " +
                           std::to_string(max_iters) + " iterations (residual " +
                           std::to_string(residual) + ")");
}

std::vector<Eigen::MatrixXd> equilibrium_conditional_values(const MixtureDDCModel& model, int type,
                                                            const CCPProfile& p, double tol) {
  std::vector<Eigen::MatrixXd> out;
  for (int j = 0; j < model.num_firms(); ++j) {
    auto rx = std::make_shared<const RivalExpectation>(model, j, type, p);
    Eigen::VectorXd v = solve_firm_value(model, rx, model.type_params(type),
                                         Eigen::VectorXd::Zero(model.num_states()), tol);
    out.push_back(conditional_values(model, model.type_params(type), v, *rx));
  }
  return out;
}

CCPProfile solve_all_types(const MixtureDDCModel& model, double tol) {
  CCPProfile p = CCPProfile::uniform(model.num_types(), model.num_firms(), model.num_states(),
                                     model.num_actions());
  if (model.num_firms() == 1) {
    for (int m = 0; m < model.num_types(); ++m) p.at(m, 0) = solve_type_policy(model, m, tol).ccp;
    return p;
  }
  for (int m = 0; m < model.num_types(); ++m) {
    CCPProfile eq = solve_game_equilibrium(model, m, p, tol);
    for (int j = 0; j < model.num_firms(); ++j) p.at(m, j) = eq.at(m, j);
  }
  return p;
}

SimulatedPanel simulate_panel(const MixtureDDCModel& model, const CCPProfile& policies,
                              const Eigen::Ref<const Eigen::VectorXd>& pi_star, int markets,
                              int periods, std::uint64_t seed, int burn_in, int start_state) {
  if (markets < 1 || periods < 1)
    throw std::invalid_argument("simulate_panel: markets and periods must be positive");
  if (pi_star.size() != policies.num_types())
    throw std::invalid_argument("simulate_panel: type weight length mismatch");
  if (std::abs(pi_star.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("simulate_panel: type weights must sum to 1");
  const auto& sp = model.space();
  const int nf = model.num_firms();
  const int na = model.num_actions();

  int start = start_state;
  if (start < 0) {
    std::vector<int> mid(sp.num_exo_components());
    for (int k = 0; k < sp.num_exo_components(); ++k)
      mid[k] = static_cast<int>(sp.exo_grid(k).size()) / 2;
    start = sp.encode(0, sp.encode_exo(mid));
  }

  SimulatedPanel out;
  out.panel.num_markets = markets;
  out.panel.num_periods = periods;
  out.panel.num_firms = nf;
  out.panel.states.resize(markets, periods);
  out.panel.actions.assign(nf, Eigen::MatrixXi(markets, periods));
  out.types.resize(markets);

  // Streams: 0 type draw, 1 action draws, 2 exogenous-component draws.
  for (int i = 0; i < markets; ++i) {
    const int m = rng_categorical(pi_star.data(), static_cast<int>(pi_star.size()),
                                  rng_uniform(seed, i, 0, 0, 0));
    out.types[i] = m;
    int x = start;
    std::vector<int> act(nf);
    for (int t = 0; t < burn_in + periods; ++t) {
      for (int j = 0; j < nf; ++j) {
        const Eigen::MatrixXd& pol = policies.at(m, j);
        Eigen::RowVectorXd row = pol.row(x);
        act[j] = rng_categorical(row.data(), na, rng_uniform(seed, i, t + 1, 1, j));
      }
      const int rec = t - burn_in;
      if (rec >= 0) {
        out.panel.states(i, rec) = x;
        for (int j = 0; j < nf; ++j) out.panel.actions[j](i, rec) = act[j];
      }
      const int joint = [&] {
        int a = 0;
        for (int j = 0; j < nf; ++j) a = a * na + act[j];
        return a;
      }();
      const int exo_next = model.kernel().sample_next_exo(
          sp.exo_of(x), joint, [&](int comp) { return rng_uniform(seed, i, t + 1, 2, comp); });
      x = sp.encode(joint, exo_next);
    }
  }
  return out;
}

CCPProfile frequency_ccp(const PanelData& data, const MixtureDDCModel& model, double smoothing) {
  const int nx = model.num_states();
  const int na = model.num_actions();
  const int nf = model.num_firms();
  if (data.num_firms != nf)
    throw std::invalid_argument("frequency_ccp: panel firm count does not match the model");
  CCPProfile p(model.num_types(), nf, nx, na);
  for (int j = 0; j < nf; ++j) {
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(nx, na);
    for (int i = 0; i < data.num_markets; ++i)
      for (int t = 0; t < data.num_periods; ++t)
        counts(data.states(i, t), data.actions[j](i, t)) += 1.0;
    Eigen::MatrixXd est(nx, na);
    for (int x = 0; x < nx; ++x) {
      const double n = counts.row(x).sum();
      if (n == 0.0 && smoothing == 0.0)
        est.row(x).setConstant(1.0 / na);
      else
        est.row(x) = (counts.row(x).array() + smoothing) / (n + smoothing * na);
    }
    for (int m = 0; m < model.num_types(); ++m) p.at(m, j) = est;
  }
  p.floor_and_renormalize();
  return p;
}

}  // namespace ddcmix
