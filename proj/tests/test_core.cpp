#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ddcmix/linear_operator.hpp"
#include "ddcmix/logit.hpp"
#include "ddcmix/rng.hpp"
#include "ddcmix/state_space.hpp"
#include "ddcmix/tauchen.hpp"
#include "oracles.hpp"

using namespace ddcmix;

TEST_CASE("logit_ccp symmetry and simple values") {
  Eigen::VectorXd v3 = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd p3 = logit_ccp(v3);
  for (int a = 0; a < 3; ++a) CHECK(p3(a) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  Eigen::VectorXd v2(2);
  v2 << 0.0, std::log(2.0);
  Eigen::VectorXd p2 = logit_ccp(v2);
  CHECK(p2(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(p2(1) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("logit_ccp is invariant to large common shifts") {
  Eigen::VectorXd v(3);
  v << 0.3, -1.2, 2.0;
  Eigen::VectorXd base = logit_ccp(v);
  Eigen::VectorXd shifted = logit_ccp(Eigen::VectorXd(v.array() + 1e8));
  CHECK((base - shifted).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("logit_ccp sums to one for random finite inputs") {
  std::mt19937 gen(5);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd v = 10.0 * oracles::random_vector(gen, 4);
    CHECK(std::abs(logit_ccp(v).sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("social_surplus basics") {
  Eigen::VectorXd one(1);
  one << 3.7;
  CHECK(social_surplus(one) == doctest::Approx(3.7));
  Eigen::VectorXd two(2);
  two << 5.0, 5.0;
  CHECK(social_surplus(two) == doctest::Approx(5.0 + std::log(2.0)));
  Eigen::VectorXd big(2);
  big << 1000.0, 1000.0;
  CHECK(social_surplus(big) == doctest::Approx(1000.0 + std::log(2.0)));
}

TEST_CASE("social_surplus minus max lies in [0, log |A|]") {
  std::mt19937 gen(9);
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::VectorXd v = 20.0 * oracles::random_vector(gen, 5);
    const double q = social_surplus(v) - v.maxCoeff();
    CHECK(q >= 0.0);
    CHECK(q <= std::log(5.0) + 1e-12);
  }
}

TEST_CASE("logit_ccp equals the social surplus gradient (finite differences)") {
  std::mt19937 gen(13);
  Eigen::VectorXd v = 3.0 * oracles::random_vector(gen, 4);
  Eigen::VectorXd p = logit_ccp(v);
  Eigen::VectorXd fd = oracles::fd_gradient(
      [](const Eigen::VectorXd& x) { return social_surplus(x); }, v, 1e-6);
  CHECK((p - fd).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("tauchen rows are identical when persistence is zero") {
  Ar1Spec spec;
  spec.persistence = 0.0;
  spec.innovation_sd = 1.0;
  spec.grid_points = 5;
  TauchenResult t = tauchen_discretize(spec);
  for (int i = 1; i < 5; ++i)
    CHECK((t.transition[0].row(i) - t.transition[0].row(0)).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("tauchen rows sum to one") {
  Ar1Spec spec;
  spec.intercept = 0.2;
  spec.persistence = 0.6;
  spec.innovation_sd = 1.0;
  spec.grid_points = 6;
  TauchenResult t = tauchen_discretize(spec);
  for (int i = 0; i < 6; ++i) CHECK(std::abs(t.transition[0].row(i).sum() - 1.0) < 1e-12);
}

TEST_CASE("tauchen chain stationary mean matches mu/(1-rho) within grid resolution") {
  Ar1Spec spec;
  spec.intercept = 0.2;
  spec.persistence = 0.6;
  spec.innovation_sd = 1.0;
  spec.grid_points = 6;
  TauchenResult t = tauchen_discretize(spec);
  // Oracle: simulate the discretized chain for 1e6 steps.
  int state = 3;
  double sum = 0.0;
  const int steps = 1000000;
  for (int s = 0; s < steps; ++s) {
    Eigen::RowVectorXd row = t.transition[0].row(state);
    state = rng_categorical(row.data(), 6, rng_uniform(99, s));
    sum += t.grid(state);
  }
  const double half_cell = 0.5 * (t.grid(1) - t.grid(0));
  CHECK(std::abs(sum / steps - 0.2 / (1.0 - 0.6)) < half_cell);
}

TEST_CASE("tauchen action-shifted process widens the grid per the long-run means") {
  Ar1Spec spec;
  spec.intercept = 0.2;
  spec.persistence = 0.6;
  spec.innovation_sd = 1.0;
  spec.action_shift = 0.3;
  spec.conditioning_actions = 2;
  spec.grid_points = 6;
  spec.span_sigmas = 3.0;
  TauchenResult t = tauchen_discretize(spec);
  REQUIRE(t.transition.size() == 2);
  const double sigma_lr = 1.0 / std::sqrt(1.0 - 0.36);
  CHECK(t.grid(0) == doctest::Approx(0.2 / 0.4 - 3.0 * sigma_lr));
  CHECK(t.grid(5) == doctest::Approx(0.5 / 0.4 + 3.0 * sigma_lr));
  // The shifted matrix concentrates on higher grid cells.
  CHECK(t.transition[1].row(0).tail(3).sum() > t.transition[0].row(0).tail(3).sum());
}

TEST_CASE("tauchen rejects degenerate specifications") {
  Ar1Spec bad_sd;
  bad_sd.innovation_sd = 0.0;
  CHECK_THROWS_AS(tauchen_discretize(bad_sd), std::invalid_argument);
  Ar1Spec bad_rho;
  bad_rho.persistence = 1.0;
  CHECK_THROWS_AS(tauchen_discretize(bad_rho), std::invalid_argument);
}

TEST_CASE("state space round trip and firm action digits") {
  StateSpace sp(3, 2, {Eigen::VectorXd::LinSpaced(5, 1.0, 5.0)});
  CHECK(sp.num_joint_actions() == 8);
  CHECK(sp.size() == 40);
  const int joint = sp.joint_action({1, 0, 1});
  CHECK(sp.firm_action(joint, 0) == 1);
  CHECK(sp.firm_action(joint, 1) == 0);
  CHECK(sp.firm_action(joint, 2) == 1);
  for (int x = 0; x < sp.size(); ++x) CHECK(sp.encode(sp.lag_of(x), sp.exo_of(x)) == x);
}

TEST_CASE("row-stochastic kernel preserves the all-ones vector") {
  std::mt19937 gen(17);
  std::vector<ExoTransition> comps(3);
  for (auto& c : comps) c.mats = {oracles::random_row_stochastic(gen, 3)};
  TransitionKernel kernel(4, std::move(comps));
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(kernel.size());
  for (int a = 0; a < 4; ++a)
    CHECK((kernel.apply(a, ones) - ones).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("kernel dense realization matches apply") {
  std::mt19937 gen(19);
  std::vector<ExoTransition> comps(2);
  comps[0].mats = {oracles::random_row_stochastic(gen, 3), oracles::random_row_stochastic(gen, 3)};
  comps[0].selector = {0, 1};
  comps[1].mats = {oracles::random_row_stochastic(gen, 2)};
  TransitionKernel kernel(2, std::move(comps));
  Eigen::VectorXd v = oracles::random_vector(gen, kernel.size());
  for (int a = 0; a < 2; ++a) {
    Eigen::VectorXd via_dense = kernel.dense(a) * v;
    Eigen::VectorXd via_apply = kernel.apply(a, v);
    CHECK((via_dense - via_apply).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("counter rng reproducibility and stream separation") {
  CHECK(rng_uniform(1, 2, 3, 4, 5) == rng_uniform(1, 2, 3, 4, 5));
  CHECK(rng_uniform(1, 2, 3, 4, 5) != rng_uniform(1, 2, 3, 4, 6));
  CHECK(rng_uniform(2, 2, 3, 4, 5) != rng_uniform(1, 2, 3, 4, 5));
  double mean = 0.0;
  for (int i = 0; i < 20000; ++i) mean += rng_uniform(7, i);
  CHECK(std::abs(mean / 20000 - 0.5) < 0.01);
}
