#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ddcmix/estimator.hpp"
#include "ddcmix/harness.hpp"
#include "ddcmix/logit.hpp"
#include "oracles.hpp"

using namespace ddcmix;

namespace {

PanelData one_obs_panel(int state, int action) {
  PanelData panel;
  panel.num_markets = 1;
  panel.num_periods = 1;
  panel.num_firms = 1;
  panel.states.resize(1, 1);
  panel.states(0, 0) = state;
  panel.actions = {Eigen::MatrixXi(1, 1)};
  panel.actions[0](0, 0) = action;
  return panel;
}

EntryExitSpec small_spec(double beta, int grid, int markets, int periods) {
  EntryExitSpec spec = EntryExitSpec::defaults();
  spec.beta = beta;
  spec.grid_points = grid;
  spec.markets = markets;
  spec.periods = periods;
  spec.burn_in = 0;
  return spec;
}

}  // namespace

TEST_CASE("e_step with one type puts full weight everywhere") {
  CCPProfile p = CCPProfile::uniform(1, 1, 3, 2);
  PanelData panel = one_obs_panel(1, 0);
  EStepResult r = e_step(p, Eigen::VectorXd::Ones(1), panel);
  CHECK(r.weights.values(0, 0) == doctest::Approx(1.0));
  CHECK(r.pi_new(0) == doctest::Approx(1.0));
}

TEST_CASE("e_step with identical type CCPs returns the prior weights") {
  CCPProfile p = CCPProfile::uniform(2, 1, 3, 2);
  PanelData panel = one_obs_panel(2, 1);
  Eigen::VectorXd pi(2);
  pi << 0.7, 0.3;
  EStepResult r = e_step(p, pi, panel);
  CHECK(r.weights.values(0, 0) == doctest::Approx(0.7));
  CHECK(r.weights.values(0, 1) == doctest::Approx(0.3));
}

TEST_CASE("e_step two-type Bayes arithmetic") {
  CCPProfile p = CCPProfile::uniform(2, 1, 1, 2);
  p.at(0, 0) << 0.8, 0.2;
  p.at(1, 0) << 0.2, 0.8;
  PanelData panel = one_obs_panel(0, 0);
  Eigen::VectorXd pi(2);
  pi << 0.5, 0.5;
  EStepResult r = e_step(p, pi, panel);
  CHECK(r.weights.values(0, 0) == doctest::Approx(0.8));
  CHECK(r.weights.values(0, 1) == doctest::Approx(0.2));
}

TEST_CASE("e_step weights row-normalize over many markets") {
  MixtureDDCModel model = build_entry_exit_model(small_spec(0.9, 2, 50, 5));
  CCPProfile pol = solve_all_types(model);
  SimulatedPanel sim = simulate_panel(model, pol, model.type_weights(), 50, 5, 7, 0);
  EStepResult r = e_step(pol, model.type_weights(), sim.panel);
  for (int i = 0; i < 50; ++i)
    CHECK(std::abs(r.weights.values.row(i).sum() - 1.0) < 1e-12);
  CHECK(std::abs(r.pi_new.sum() - 1.0) < 1e-12);
}

TEST_CASE("m_step matches a dense grid search on a 2-parameter 4-state logit") {
  // Direct affine objective: features z over (x, a), offset zero, fixed counts.
  Eigen::MatrixXd z(8, 2);  // rows x * 2 + a
  z << 0, 0, 1.0, 0.4, 0, 0, -0.5, 1.0, 0, 0, 0.8, -0.7, 0, 0, 0.3, 0.9;
  Eigen::MatrixXd counts(4, 2);
  counts << 13, 7, 4, 16, 9, 11, 10, 10;
  std::vector<int> visited = {0, 1, 2, 3};

  auto objective_at = [&](const Eigen::VectorXd& theta) {
    double q = 0.0;
    for (int x = 0; x < 4; ++x) {
      Eigen::Vector2d u(z.row(2 * x) * theta, z.row(2 * x + 1) * theta);
      const double lse = social_surplus(u);
      for (int a = 0; a < 2; ++a) q += counts(x, a) * (u(a) - lse);
    }
    return q / counts.sum();
  };

  MStepObjective obj;
  obj.dim = 2;
  obj.eval = [&](const Eigen::VectorXd& theta, double* value, Eigen::VectorXd* grad,
                 Eigen::MatrixXd* hess) {
    double q = 0.0;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(2);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 2);
    for (int x = 0; x < 4; ++x) {
      Eigen::Vector2d u(z.row(2 * x) * theta, z.row(2 * x + 1) * theta);
      const double lse = social_surplus(u);
      Eigen::Vector2d p((u.array() - lse).exp());
      const double n_x = counts.row(x).sum();
      Eigen::RowVector2d zbar = p(0) * z.row(2 * x) + p(1) * z.row(2 * x + 1);
      for (int a = 0; a < 2; ++a) {
        q += counts(x, a) * (u(a) - lse);
        g += counts(x, a) * z.row(2 * x + a).transpose();
      }
      g -= n_x * zbar.transpose();
      Eigen::MatrixXd second = p(0) * z.row(2 * x).transpose() * z.row(2 * x) +
                               p(1) * z.row(2 * x + 1).transpose() * z.row(2 * x + 1) -
                               zbar.transpose() * zbar;
      h -= n_x * second;
    }
    const double total = counts.sum();
    if (value) *value = q / total;
    if (grad) *grad = g / total;
    if (hess) *hess = h / total;
  };

  MStepResult res = m_step(obj, Eigen::VectorXd::Zero(2), 1e-10, 50);
  CHECK(res.grad_norm <= 1e-10);

  // Grid-search oracle with step 1e-3 around the Newton solution.
  double best = -1e300;
  Eigen::VectorXd best_theta(2);
  for (double t0 = res.theta(0) - 0.05; t0 <= res.theta(0) + 0.05; t0 += 1e-3)
    for (double t1 = res.theta(1) - 0.05; t1 <= res.theta(1) + 0.05; t1 += 1e-3) {
      Eigen::VectorXd th(2);
      th << t0, t1;
      const double q = objective_at(th);
      if (q > best) {
        best = q;
        best_theta = th;
      }
    }
  CHECK((res.theta - best_theta).lpNorm<Eigen::Infinity>() <= 1.5e-3);
}

TEST_CASE("em_npl_q_run with one type and a vanishing discount reduces to a static logit") {
  EntryExitSpec spec = small_spec(1e-12, 2, 1500, 10);
  spec.type_params = {EntryExitSpec::defaults().type_params[0]};
  spec.type_weights = Eigen::VectorXd::Ones(1);
  MixtureDDCModel model = build_entry_exit_model(spec);
  CCPProfile pol = solve_all_types(model);
  SimulatedPanel sim = simulate_panel(model, pol, model.type_weights(), 1500, 10, 11, 0);

  EstimationInit init;
  init.p0 = frequency_ccp(sim.panel, model);
  init.pi0 = Eigen::VectorXd::Ones(1);
  EstimatorOptions opt;
  opt.method = Method::PV_GMRES;
  opt.q = 4;
  opt.eps_outer = 1e-8;
  opt.max_outer = 200;
  EstimationResult r = em_npl_q_run(model, sim.panel, init, opt);
  CHECK(r.outer.converged);

  // Independent static-logit oracle (IRLS on pooled counts).
  const int nx = model.num_states();
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(nx, 2);
  for (int i = 0; i < sim.panel.num_markets; ++i)
    for (int t = 0; t < sim.panel.num_periods; ++t)
      counts(sim.panel.states(i, t), sim.panel.actions[0](i, t)) += 1.0;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(model.num_params());
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(model.num_params());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(model.num_params(), model.num_params());
    for (int x = 0; x < nx; ++x) {
      const double n_x = counts.row(x).sum();
      if (n_x == 0) continue;
      const Eigen::RowVectorXd z1 = model.basis(0).row(model.basis_row(x, 1));
      const double u = z1.dot(theta);
      const double p1 = 1.0 / (1.0 + std::exp(-u));
      g += (counts(x, 1) - n_x * p1) * z1.transpose();
      h -= n_x * p1 * (1.0 - p1) * z1.transpose() * z1;
    }
    Eigen::VectorXd step = (-h).ldlt().solve(g);
    theta += step;
    if (g.lpNorm<Eigen::Infinity>() < 1e-12) break;
  }
  CHECK((r.state.theta[0] - theta).lpNorm<Eigen::Infinity>() < 1e-5);
}

TEST_CASE("ccp_update stationarity and the alpha = 1 identity") {
  std::mt19937 gen(3);
  CCPProfile p(1, 1, 5, 2);
  p.at(0, 0) = oracles::random_ccp(gen, 5, 2);

  SpectralHistory h1, h2;
  CCPProfile plain = ccp_update(p, p, CcpUpdateMode::Plain, h1);
  CCPProfile spec = ccp_update(p, p, CcpUpdateMode::Spectral, h2);
  CHECK((plain.flatten() - p.flatten()).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((spec.flatten() - p.flatten()).lpNorm<Eigen::Infinity>() < 1e-12);

  // Small residual: alpha_0 = min(1, 1/|Phi|) = 1 reproduces the plain update.
  CCPProfile lam = p;
  lam.at(0, 0).col(0).array() += 0.01;
  lam.at(0, 0).col(1).array() -= 0.01;
  SpectralHistory h3, h4;
  CCPProfile a = ccp_update(lam, p, CcpUpdateMode::Plain, h3);
  CCPProfile b = ccp_update(lam, p, CcpUpdateMode::Spectral, h4);
  CHECK((a.flatten() - b.flatten()).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("match_labels recovers an exact relabeling with zero mse") {
  std::mt19937 gen(5);
  std::vector<Eigen::VectorXd> star = {oracles::random_vector(gen, 3), oracles::random_vector(gen, 3),
                                       oracles::random_vector(gen, 3)};
  Eigen::VectorXd pi_star(3);
  pi_star << 0.5, 0.3, 0.2;
  std::vector<Eigen::VectorXd> hat = {star[2], star[0], star[1]};
  Eigen::VectorXd pi_hat(3);
  pi_hat << pi_star(2), pi_star(0), pi_star(1);
  LabelMatch m = match_labels(hat, pi_hat, star, pi_star);
  CHECK(m.mse == doctest::Approx(0.0));
  CHECK(m.permutation[0] == 1);
  CHECK(m.permutation[1] == 2);
  CHECK(m.permutation[2] == 0);
}

TEST_CASE("match_labels single type and exhaustive re-enumeration oracle") {
  std::mt19937 gen(7);
  std::vector<Eigen::VectorXd> star1 = {oracles::random_vector(gen, 4)};
  std::vector<Eigen::VectorXd> hat1 = {oracles::random_vector(gen, 4)};
  Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  LabelMatch m1 = match_labels(hat1, one, star1, one);
  CHECK(m1.mse == doctest::Approx((hat1[0] - star1[0]).squaredNorm()));

  std::vector<Eigen::VectorXd> star = {oracles::random_vector(gen, 2), oracles::random_vector(gen, 2),
                                       oracles::random_vector(gen, 2)};
  Eigen::VectorXd pi_star(3);
  pi_star << 0.4, 0.35, 0.25;
  std::vector<Eigen::VectorXd> hat;
  for (int t = 0; t < 3; ++t) hat.push_back(star[t] + 0.1 * oracles::random_vector(gen, 2));
  Eigen::VectorXd pi_hat = pi_star;
  LabelMatch got = match_labels(hat, pi_hat, star, pi_star);
  // Oracle: independent enumeration of all 6 permutations.
  std::vector<std::vector<int>> perms = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                         {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  double best = 1e300;
  for (const auto& perm : perms) {
    double mse = 0.0;
    for (int t = 0; t < 3; ++t) {
      mse += (hat[perm[t]] - star[t]).squaredNorm();
      mse += std::pow(pi_hat(perm[t]) - pi_star(t), 2);
    }
    best = std::min(best, mse);
  }
  CHECK(got.mse == doctest::Approx(best));
}

TEST_CASE("truncation invariance on a small mixture design") {
  EntryExitSpec spec = small_spec(0.9, 2, 400, 10);
  spec.type_params = {EntryExitSpec::defaults().type_params[0],
                      EntryExitSpec::defaults().type_params[1]};
  spec.type_weights = (Eigen::VectorXd(2) << 0.6, 0.4).finished();
  MixtureDDCModel model = build_entry_exit_model(spec);
  CCPProfile pol = solve_all_types(model);
  SimulatedPanel sim = simulate_panel(model, pol, model.type_weights(), 400, 10, 17, 0);

  SieveInitConfig sc;
  sc.num_types = 2;
  SieveInit si = sieve_logit_init(sim.panel, model, sc, 17);
  EstimationInit init;
  init.p0 = si.ccps;
  init.pi0 = si.pi;

  std::vector<EstimationResult> runs;
  for (int q : {1, 4, kInfIters}) {
    EstimatorOptions opt;
    opt.method = Method::PV_GMRES;
    opt.q = q;
    opt.eps_outer = 1e-9;
    opt.max_outer = 400;
    runs.push_back(em_npl_q_run(model, sim.panel, init, opt));
    CHECK(runs.back().outer.converged);
  }
  for (std::size_t i = 1; i < runs.size(); ++i) {
    for (int t = 0; t < 2; ++t)
      CHECK((runs[i].state.theta[t] - runs[0].state.theta[t]).lpNorm<Eigen::Infinity>() < 1e-5);
    CHECK((runs[i].state.pi - runs[0].state.pi).lpNorm<Eigen::Infinity>() < 1e-5);
  }
}

TEST_CASE("multi_start determinism and single-start equivalence") {
  EntryExitSpec spec = small_spec(0.9, 2, 200, 8);
  spec.type_params = {EntryExitSpec::defaults().type_params[0]};
  spec.type_weights = Eigen::VectorXd::Ones(1);
  MixtureDDCModel model = build_entry_exit_model(spec);
  CCPProfile pol = solve_all_types(model);
  SimulatedPanel sim = simulate_panel(model, pol, model.type_weights(), 200, 8, 21, 0);

  EstimatorOptions opt;
  opt.method = Method::PV_GMRES;
  opt.q = 4;
  InitFactory factory = [&](int, std::uint64_t) {
    EstimationInit init;
    init.p0 = frequency_ccp(sim.panel, model);
    init.pi0 = Eigen::VectorXd::Ones(1);
    return init;
  };
  MultiStartResult a = multi_start(model, sim.panel, opt, factory, 2, 5);
  MultiStartResult b = multi_start(model, sim.panel, opt, factory, 2, 5);
  CHECK(a.best.state.log_pseudo_likelihood == b.best.state.log_pseudo_likelihood);
  CHECK((a.best.state.theta[0] - b.best.state.theta[0]).norm() == 0.0);

  EstimationResult single = em_npl_q_run(model, sim.panel, factory(0, 0), opt);
  CHECK((single.state.theta[0] - a.best.state.theta[0]).norm() == 0.0);
}

TEST_CASE("standard errors: finite-difference cross-check and static-logit oracle") {
  EntryExitSpec spec = small_spec(1e-12, 2, 2500, 6);
  spec.type_params = {EntryExitSpec::defaults().type_params[0]};
  spec.type_weights = Eigen::VectorXd::Ones(1);
  MixtureDDCModel model = build_entry_exit_model(spec);
  CCPProfile pol = solve_all_types(model);
  SimulatedPanel sim = simulate_panel(model, pol, model.type_weights(), 2500, 6, 23, 0);

  EstimationInit init;
  init.p0 = frequency_ccp(sim.panel, model);
  init.pi0 = Eigen::VectorXd::Ones(1);
  EstimatorOptions opt;
  opt.method = Method::PV_GMRES;
  opt.q = kInfIters;
  opt.eps_outer = 1e-8;
  opt.max_outer = 200;
  EstimationResult r = em_npl_q_run(model, sim.panel, init, opt);
  REQUIRE(r.outer.converged);

  CovarianceResult cov = standard_errors_linear(model, sim.panel, r, true);
  CHECK(cov.fd_max_rel_err < 1e-5);

  // Textbook logit information oracle at beta -> 0: I = sum_x n_x p (1-p) z z'.
  const int nx = model.num_states();
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(nx, 2);
  for (int i = 0; i < sim.panel.num_markets; ++i)
    for (int t = 0; t < sim.panel.num_periods; ++t)
      counts(sim.panel.states(i, t), sim.panel.actions[0](i, t)) += 1.0;
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(model.num_params(), model.num_params());
  for (int x = 0; x < nx; ++x) {
    const double n_x = counts.row(x).sum();
    if (n_x == 0) continue;
    const Eigen::RowVectorXd z1 = model.basis(0).row(model.basis_row(x, 1));
    const double u = z1.dot(r.state.theta[0]);
    const double p1 = 1.0 / (1.0 + std::exp(-u));
    info += n_x * p1 * (1.0 - p1) * z1.transpose() * z1;
  }
  Eigen::MatrixXd cov_oracle = info.inverse();
  CHECK((cov.covariance - cov_oracle).lpNorm<Eigen::Infinity>() <
        1e-4 * (1.0 + cov_oracle.lpNorm<Eigen::Infinity>()));

  // Symmetric positive definite at the interior optimum.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov.covariance);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("estimator reports the three fixed-point residuals within the outer tolerance") {
  EntryExitSpec spec = small_spec(0.9, 2, 400, 10);
  spec.type_params = {EntryExitSpec::defaults().type_params[0],
                      EntryExitSpec::defaults().type_params[1]};
  spec.type_weights = (Eigen::VectorXd(2) << 0.6, 0.4).finished();
  MixtureDDCModel model = build_entry_exit_model(spec);
  CCPProfile pol = solve_all_types(model);
  SimulatedPanel sim = simulate_panel(model, pol, model.type_weights(), 400, 10, 29, 0);

  SieveInitConfig sc;
  sc.num_types = 2;
  SieveInit si = sieve_logit_init(sim.panel, model, sc, 29);
  EstimationInit init{si.ccps, si.pi, {}};
  EstimatorOptions opt;
  opt.method = Method::PV_GMRES;
  opt.q = 4;
  opt.eps_outer = 1e-3;
  EstimationResult r = em_npl_q_run(model, sim.panel, init, opt);
  REQUIRE(r.outer.converged);
  const double bound = 10.0 * opt.eps_outer;
  REQUIRE(!r.trace.empty());
  CHECK(r.trace.back().dp <= bound);
  CHECK(r.trace.back().dtheta <= bound);
  CHECK(r.trace.back().dv_rel <= bound);
  CHECK(r.trace.back().dpi <= bound);
}
