#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <random>

#include "ddcmix/dgp.hpp"
#include "ddcmix/logit.hpp"
#include "ddcmix/rival.hpp"
#include "oracles.hpp"

using namespace ddcmix;

namespace {

EntryExitSpec small_spec(int grid_points, bool fd = true) {
  EntryExitSpec spec = EntryExitSpec::defaults();
  spec.grid_points = grid_points;
  spec.finite_dependence = fd;
  return spec;
}

}  // namespace

TEST_CASE("entry/exit state space sizes") {
  CHECK(build_entry_exit_model(small_spec(3)).num_states() == 486);
  CHECK(build_entry_exit_model(small_spec(6)).num_states() == 15552);
}

TEST_CASE("incumbents have zero entry cost features") {
  MixtureDDCModel model = build_entry_exit_model(small_spec(2));
  const auto& sp = model.space();
  for (int exo = 0; exo < sp.exo_size(); exo += 7) {
    const int x = sp.encode(1, exo);  // incumbent
    const Eigen::VectorXd row = model.basis(0).row(model.basis_row(x, 1));
    CHECK(row(5) == 0.0);
    CHECK(row(6) == 0.0);
    const int xe = sp.encode(0, exo);  // entrant pays the entry cost
    CHECK(model.basis(0)(model.basis_row(xe, 1), 5) == -1.0);
  }
}

TEST_CASE("entry/exit kron-factored transition equals an explicitly assembled dense kernel") {
  MixtureDDCModel model = build_entry_exit_model(small_spec(2));
  REQUIRE(model.num_states() == 64);
  std::mt19937 gen(3);
  Eigen::VectorXd v = oracles::random_vector(gen, 64);
  for (int a = 0; a < 2; ++a) {
    // Assemble the dense transition directly from the component matrices.
    std::vector<Eigen::MatrixXd> mats;
    for (const auto& comp : model.kernel().components())
      mats.push_back(comp.selector.empty() ? comp.mats[0] : comp.mats[comp.selector[a]]);
    Eigen::MatrixXd exo_dense = oracles::dense_kron(mats);
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(64, 64);
    for (int lag = 0; lag < 2; ++lag)
      full.block(lag * 32, a * 32, 32, 32) = exo_dense;
    CHECK(((full * v) - model.kernel().apply(a, v)).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("FD kernel has the two-period finite dependence property, NFD does not") {
  MixtureDDCModel fd = build_entry_exit_model(small_spec(2, true));
  MixtureDDCModel nfd = build_entry_exit_model(small_spec(2, false));
  for (const MixtureDDCModel* m : {&fd, &nfd}) {
    Eigen::MatrixXd f0 = m->kernel().dense(0);
    Eigen::MatrixXd f1 = m->kernel().dense(1);
    for (int a1 = 0; a1 < 2; ++a1) {
      Eigen::MatrixXd fa = m->kernel().dense(a1);
      const double gap = (f0 * fa - f1 * fa).lpNorm<Eigen::Infinity>();
      if (m == &fd)
        CHECK(gap < 1e-12);
      else
        CHECK(gap > 1e-3);
    }
  }
}

TEST_CASE("entry game state space sizes and rival-free payoffs") {
  CHECK(build_entry_game_model(EntryGameSpec::defaults(7)).num_states() == 640);
  MixtureDDCModel g3 = build_entry_game_model(EntryGameSpec::defaults(3));
  CHECK(g3.num_states() == 40);
  // With theta_rc = 0 the expected payoff ignores rivals' actions.
  EntryGameSpec spec = EntryGameSpec::defaults(3);
  spec.theta_rc = 0.0;
  MixtureDDCModel m = build_entry_game_model(spec);
  const Eigen::VectorXd theta = m.type_params(0);
  const auto& sp = m.space();
  for (int x = 0; x < m.num_states(); x += 7) {
    double first = 0.0;
    bool have = false;
    for (int joint = 0; joint < m.num_joint_actions(); ++joint) {
      if (sp.firm_action(joint, 0) != 1) continue;
      const double u = m.utility(0, x, joint, theta);
      if (!have) {
        first = u;
        have = true;
      } else {
        CHECK(u == doctest::Approx(first));
      }
    }
  }
}

TEST_CASE("rival_expectation reduces to the raw basis and kernel for a single agent") {
  MixtureDDCModel model = build_entry_exit_model(small_spec(2));
  CCPProfile p = CCPProfile::uniform(3, 1, model.num_states(), 2);
  RivalExpectation rx(model, 0, 0, p);
  CHECK((rx.phi_bar() - model.basis(0)).lpNorm<Eigen::Infinity>() == 0.0);
  std::mt19937 gen(7);
  Eigen::VectorXd v = oracles::random_vector(gen, model.num_states());
  for (int a = 0; a < 2; ++a)
    CHECK((rx.apply_f(a, v) - model.kernel().apply(a, v)).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("rival_expectation with a pure-action rival selects that slice") {
  EntryGameSpec spec = EntryGameSpec::defaults(2);
  MixtureDDCModel model = build_entry_game_model(spec);
  CCPProfile p = CCPProfile::uniform(1, 2, model.num_states(), 2);
  p.at(0, 1).col(0).setConstant(0.0);
  p.at(0, 1).col(1).setConstant(1.0);  // rival always active
  RivalExpectation rx(model, 0, 0, p);
  const auto& sp = model.space();
  for (int x = 0; x < model.num_states(); ++x)
    for (int a = 0; a < 2; ++a) {
      const int joint = sp.joint_action({a, 1});
      CHECK(rx.phi_bar()(static_cast<Eigen::Index>(x) * 2 + a, 1) ==
            doctest::Approx(model.basis(0)(model.basis_row(x, joint), 1)));
    }
}

TEST_CASE("rival_expectation matches the brute-force profile enumeration for J = 3") {
  EntryGameSpec spec = EntryGameSpec::defaults(3);
  MixtureDDCModel model = build_entry_game_model(spec);
  std::mt19937 gen(11);
  CCPProfile p(1, 3, model.num_states(), 2);
  for (int j = 0; j < 3; ++j) p.at(0, j) = oracles::random_ccp(gen, model.num_states(), 2);

  const int firm = 1;
  RivalExpectation rx(model, firm, 0, p);
  Eigen::VectorXd v = oracles::random_vector(gen, model.num_states());
  const auto& sp = model.space();

  for (int a = 0; a < 2; ++a) {
    Eigen::MatrixXd phi_want = Eigen::MatrixXd::Zero(model.num_states(), model.num_params());
    Eigen::VectorXd fv_want = Eigen::VectorXd::Zero(model.num_states());
    for (int r0 = 0; r0 < 2; ++r0)
      for (int r2 = 0; r2 < 2; ++r2) {
        const int joint = sp.joint_action({r0, a, r2});
        Eigen::VectorXd fv = model.kernel().apply(joint, v);
        for (int x = 0; x < model.num_states(); ++x) {
          const double w = p.at(0, 0)(x, r0) * p.at(0, 2)(x, r2);
          phi_want.row(x) += w * model.basis(firm).row(model.basis_row(x, joint));
          fv_want(x) += w * fv(x);
        }
      }
    Eigen::VectorXd fv_got = rx.apply_f(a, v);
    CHECK((fv_got - fv_want).lpNorm<Eigen::Infinity>() < 1e-12 * (1.0 + fv_want.lpNorm<Eigen::Infinity>()));
    for (int x = 0; x < model.num_states(); ++x)
      CHECK((rx.phi_bar().row(static_cast<Eigen::Index>(x) * 2 + a) - phi_want.row(x)).lpNorm<Eigen::Infinity>() <
            1e-12);
  }
}

TEST_CASE("expected transition rows sum to one") {
  EntryGameSpec spec = EntryGameSpec::defaults(3);
  MixtureDDCModel model = build_entry_game_model(spec);
  std::mt19937 gen(13);
  CCPProfile p(1, 3, model.num_states(), 2);
  for (int j = 0; j < 3; ++j) p.at(0, j) = oracles::random_ccp(gen, model.num_states(), 2);
  RivalExpectation rx(model, 0, 0, p);
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(model.num_states());
  for (int a = 0; a < 2; ++a)
    CHECK((rx.apply_f(a, ones) - ones).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("conditional_values obeys the beta = 0 and V = 0 reductions") {
  EntryExitSpec spec = small_spec(2);
  spec.beta = 0.5;
  MixtureDDCModel model = build_entry_exit_model(spec);
  CCPProfile p = CCPProfile::uniform(3, 1, model.num_states(), 2);
  const Eigen::VectorXd theta = model.type_params(0);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(model.num_states());
  Eigen::MatrixXd cv = conditional_values(model, theta, zero, 0, 0, p);
  for (int x = 0; x < model.num_states(); ++x)
    for (int a = 0; a < 2; ++a)
      CHECK(cv(x, a) == doctest::Approx(model.utility(0, x, a, theta)));
}

TEST_CASE("conditional_values two-state hand expansion") {
  // One action pair, two states, hand-checkable dot products.
  Eigen::MatrixXd trans(2, 2);
  trans << 0.7, 0.3, 0.4, 0.6;
  Eigen::MatrixXd basis(4, 1);  // rows (x, a): (0,0), (0,1), (1,0), (1,1)
  basis << 0.0, 1.0, 0.0, 2.0;
  MixtureDDCModel model = oracles::toy_model(
      2, trans, Eigen::VectorXd::LinSpaced(2, 0.0, 1.0), {basis}, 0.9,
      {(Eigen::VectorXd(1) << 1.5).finished()}, Eigen::VectorXd::Ones(1));
  // State space: lag x exo = 4 states; value vector over 4 states.
  Eigen::VectorXd v(4);
  v << 1.0, 2.0, 3.0, 4.0;
  CCPProfile p = CCPProfile::uniform(1, 1, 4, 2);
  Eigen::MatrixXd cv = conditional_values(model, model.type_params(0), v, 0, 0, p);
  // Action a moves lag to a; exo evolves by trans. For x = (lag 0, exo 0):
  // cv(x, 1) = 2 * 1.5 + 0.9 * (0.7 * v[lag=1,exo=0] + 0.3 * v[lag=1,exo=1]).
  const double want = 0.0 * 1.5 + 0.9 * (0.7 * 1.0 + 0.3 * 2.0);
  CHECK(cv(0, 0) == doctest::Approx(want));
  const double want1 = 1.0 * 1.5 + 0.9 * (0.7 * 3.0 + 0.3 * 4.0);
  CHECK(cv(0, 1) == doctest::Approx(want1));
}

TEST_CASE("panel CSV round trip and parse errors") {
  PanelData panel;
  panel.num_markets = 2;
  panel.num_periods = 3;
  panel.num_firms = 2;
  panel.states.resize(2, 3);
  panel.states << 0, 5, 2, 1, 1, 3;
  panel.actions = {Eigen::MatrixXi(2, 3), Eigen::MatrixXi(2, 3)};
  panel.actions[0] << 1, 0, 1, 0, 0, 1;
  panel.actions[1] << 0, 0, 1, 1, 1, 0;
  const std::string path = "/tmp/ddcmix_test_panel.csv";
  panel.save_csv(path);
  PanelData loaded = PanelData::load_csv(path);
  CHECK(loaded.num_markets == 2);
  CHECK(loaded.num_periods == 3);
  CHECK(loaded.num_firms == 2);
  CHECK((loaded.states - panel.states).cwiseAbs().maxCoeff() == 0);
  for (int j = 0; j < 2; ++j)
    CHECK((loaded.actions[j] - panel.actions[j]).cwiseAbs().maxCoeff() == 0);

  const std::string bad = "/tmp/ddcmix_test_bad.csv";
  {
    std::FILE* f = std::fopen(bad.c_str(), "w");
    std::fputs("market,period,firm,state_index,action\n0,0,0,zero,1\n", f);
    std::fclose(f);
  }
  try {
    PanelData::load_csv(bad);
    FAIL("expected parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("model validation rejects bad weights and kernels") {
  EntryExitSpec spec = small_spec(2);
  spec.type_weights = (Eigen::VectorXd(3) << 0.5, 0.5, 0.1).finished();
  CHECK_THROWS_AS(build_entry_exit_model(spec), std::invalid_argument);
}
