#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "ddcmix/linear_operator.hpp"
#include "ddcmix/solvers.hpp"
#include "ddcmix/types.hpp"
#include "oracles.hpp"

using namespace ddcmix;

TEST_CASE("kron_matvec identity factors") {
  std::vector<Eigen::MatrixXd> factors = {Eigen::MatrixXd::Identity(2, 2),
                                          Eigen::MatrixXd::Identity(2, 2)};
  Eigen::VectorXd v(4);
  v << 1, 2, 3, 4;
  CHECK((kron_matvec(factors, v) - v).norm() == doctest::Approx(0.0));
}

TEST_CASE("kron_matvec single factor is a plain matvec") {
  Eigen::MatrixXd swap(2, 2);
  swap << 0, 1, 1, 0;
  Eigen::VectorXd v(2);
  v << 3, 7;
  Eigen::VectorXd out = kron_matvec({swap}, v);
  CHECK(out(0) == doctest::Approx(7.0));
  CHECK(out(1) == doctest::Approx(3.0));
}

TEST_CASE("kron_matvec matches the dense Kronecker oracle") {
  std::mt19937 gen(42);
  Eigen::MatrixXd f1 = oracles::random_matrix(gen, 3, 3);
  Eigen::MatrixXd f2 = oracles::random_matrix(gen, 3, 3);
  Eigen::VectorXd v = oracles::random_vector(gen, 9);
  Eigen::VectorXd got = kron_matvec({f1, f2}, v);
  Eigen::VectorXd want = oracles::dense_kron({f1, f2}) * v;
  CHECK((got - want).norm() / want.norm() < 1e-12);
}

TEST_CASE("kron_matvec dense agreement over factor shapes up to K=3, L=4") {
  std::mt19937 gen(7);
  for (int k = 1; k <= 3; ++k) {
    for (int l = 2; l <= 4; ++l) {
      std::vector<Eigen::MatrixXd> factors;
      int dim = 1;
      for (int i = 0; i < k; ++i) {
        factors.push_back(oracles::random_matrix(gen, l, l));
        dim *= l;
      }
      Eigen::VectorXd v = oracles::random_vector(gen, dim);
      Eigen::VectorXd got = kron_matvec(factors, v);
      Eigen::VectorXd want = oracles::dense_kron(factors) * v;
      CHECK((got - want).norm() <= 1e-12 * (1.0 + want.norm()));
    }
  }
}

TEST_CASE("kron_matvec rejects a dimension mismatch, naming both lengths") {
  std::vector<Eigen::MatrixXd> factors = {Eigen::MatrixXd::Identity(2, 2),
                                          Eigen::MatrixXd::Identity(3, 3)};
  Eigen::VectorXd v = Eigen::VectorXd::Zero(5);
  try {
    kron_matvec(factors, v);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find('6') != std::string::npos);
    CHECK(msg.find('5') != std::string::npos);
  }
}

TEST_CASE("LinearOperator apply is linear on random triples") {
  std::mt19937 gen(3);
  Eigen::MatrixXd a = oracles::random_matrix(gen, 6, 6);
  LinearOperator op = LinearOperator::from_dense(a);
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::VectorXd x = oracles::random_vector(gen, 6);
    Eigen::VectorXd y = oracles::random_vector(gen, 6);
    const double c1 = 0.7, c2 = -1.3;
    Eigen::VectorXd lhs = op.apply(c1 * x + c2 * y);
    Eigen::VectorXd rhs = c1 * op.apply(x) + c2 * op.apply(y);
    CHECK((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
  }
}

TEST_CASE("gmres on the identity returns b after one iteration") {
  Eigen::VectorXd b(5);
  b << 1, -2, 3, 0.5, 4;
  GmresResult r = gmres(LinearOperator::identity(5), b, Eigen::VectorXd::Zero(5), 5, 1e-12);
  CHECK(r.report.iterations_used == 1);
  CHECK(r.report.converged);
  CHECK((r.y - b).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK(r.report.final_residual_norm < 1e-12);
}

TEST_CASE("gmres with q = n and tol = 0 matches a dense direct solve") {
  std::mt19937 gen(11);
  for (int n : {10, 60, 200}) {
    Eigen::MatrixXd f = oracles::random_row_stochastic(gen, n);
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - 0.95 * f;
    Eigen::VectorXd b = oracles::random_vector(gen, n);
    Eigen::VectorXd direct = a.partialPivLu().solve(b);
    GmresResult r = gmres(LinearOperator::from_dense(a), b, Eigen::VectorXd::Zero(n), n, 0.0);
    CHECK((r.y - direct).lpNorm<Eigen::Infinity>() < 1e-10 * (1.0 + direct.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("gmres residual history is non-increasing") {
  std::mt19937 gen(13);
  const int n = 50;
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - 0.9 * oracles::random_row_stochastic(gen, n);
  Eigen::VectorXd b = oracles::random_vector(gen, n);
  GmresResult r = gmres(LinearOperator::from_dense(a), b, Eigen::VectorXd::Zero(n), n, 0.0);
  for (std::size_t i = 1; i < r.residual_history.size(); ++i)
    CHECK(r.residual_history[i] <= r.residual_history[i - 1] * (1.0 + 1e-12));
}

TEST_CASE("gmres rejects non-finite inputs") {
  Eigen::VectorXd b(3);
  b << 1, std::numeric_limits<double>::quiet_NaN(), 0;
  CHECK_THROWS_AS(gmres(LinearOperator::identity(3), b, Eigen::VectorXd::Zero(3), 3, 1e-10),
                  std::invalid_argument);
}

TEST_CASE("gmres leaves its inputs unmodified and is deterministic") {
  std::mt19937 gen(17);
  const int n = 20;
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - 0.9 * oracles::random_row_stochastic(gen, n);
  Eigen::VectorXd b = oracles::random_vector(gen, n);
  Eigen::VectorXd y0 = oracles::random_vector(gen, n);
  Eigen::VectorXd b_copy = b, y0_copy = y0;
  LinearOperator op = LinearOperator::from_dense(a);
  GmresResult r1 = gmres(op, b, y0, 10, 1e-10);
  CHECK((b - b_copy).norm() == 0.0);
  CHECK((y0 - y0_copy).norm() == 0.0);
  GmresResult r2 = gmres(op, b, y0, 10, 1e-10);
  CHECK((r1.y - r2.y).norm() == 0.0);
}

TEST_CASE("successive_approx on a constant map returns the constant after one iteration") {
  Eigen::VectorXd c(3);
  c << 1, 2, 3;
  auto g = [&](const Eigen::Ref<const Eigen::VectorXd>&) { return c; };
  FixedPointResult r = successive_approx(g, Eigen::VectorXd::Zero(3), 1, 0.0);
  CHECK(r.report.iterations_used == 1);
  CHECK((r.y - c).norm() == 0.0);
}

TEST_CASE("successive_approx closed-form iterate: G(y) = 0.5 y + 1, q = 3") {
  auto g = [](const Eigen::Ref<const Eigen::VectorXd>& y) {
    return Eigen::VectorXd(0.5 * y.array() + 1.0);
  };
  FixedPointResult r = successive_approx(g, Eigen::VectorXd::Zero(1), 3, 0.0);
  CHECK(r.y(0) == doctest::Approx(1.75).epsilon(1e-15));
  CHECK(r.report.iterations_used == 3);
}

TEST_CASE("successive_approx contraction bound against a pre-converged fixed point") {
  std::mt19937 gen(23);
  const int n = 30;
  const double rho = 0.9;
  Eigen::MatrixXd f = oracles::random_row_stochastic(gen, n);
  Eigen::VectorXd b = oracles::random_vector(gen, n);
  auto g = [&](const Eigen::Ref<const Eigen::VectorXd>& y) {
    return Eigen::VectorXd(b + rho * (f * y));
  };
  // Oracle: iterate to machine precision first.
  FixedPointResult star = successive_approx(g, Eigen::VectorXd::Zero(n), 100000, 1e-15);
  Eigen::VectorXd y0 = oracles::random_vector(gen, n);
  const double e0 = (y0 - star.y).lpNorm<Eigen::Infinity>();
  for (int q : {1, 5, 20}) {
    FixedPointResult r = successive_approx(g, y0, q, 0.0);
    const double eq = (r.y - star.y).lpNorm<Eigen::Infinity>();
    CHECK(eq <= std::pow(rho, q) * e0 * (1.0 + 1e-10));
  }
}

TEST_CASE("successive_approx reports divergence with the iteration index") {
  auto g = [](const Eigen::Ref<const Eigen::VectorXd>& y) {
    return Eigen::VectorXd(y.array() * 1e200 + 1e300);
  };
  try {
    successive_approx(g, Eigen::VectorXd::Ones(2), 10, 0.0);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.iteration() >= 1);
    CHECK(e.iteration() <= 10);
  }
}

TEST_CASE("newton_kantorovich is exact on affine maps after one step") {
  std::mt19937 gen(29);
  const int n = 12;
  Eigen::MatrixXd f = 0.8 * oracles::random_row_stochastic(gen, n);
  Eigen::VectorXd b = oracles::random_vector(gen, n);
  auto g = [&](const Eigen::Ref<const Eigen::VectorXd>& y) { return Eigen::VectorXd(b + f * y); };
  auto jac = [&](const Eigen::Ref<const Eigen::VectorXd>&) { return LinearOperator::from_dense(f); };
  Eigen::VectorXd star = (Eigen::MatrixXd::Identity(n, n) - f).partialPivLu().solve(b);
  FixedPointResult r = newton_kantorovich(g, jac, Eigen::VectorXd::Zero(n), 1, 0.0);
  CHECK((r.y - star).lpNorm<Eigen::Infinity>() < 1e-9 * (1.0 + star.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("newton_kantorovich reproduces the closed-form Newton sequence on G(y) = y^2") {
  // Fixed-point form y = y^2, residual f(y) = y - y^2, starting at 0.25:
  // y_{k+1} = y_k - (y_k - y_k^2) / (1 - 2 y_k).
  auto g = [](const Eigen::Ref<const Eigen::VectorXd>& y) {
    return Eigen::VectorXd(y.array().square());
  };
  auto jac = [](const Eigen::Ref<const Eigen::VectorXd>& y) {
    const double v = 2.0 * y(0);
    return LinearOperator(1, [v](const Eigen::Ref<const Eigen::VectorXd>& u) {
      return Eigen::VectorXd(v * u);
    });
  };
  double y_hand = 0.25;
  Eigen::VectorXd y0(1);
  y0 << 0.25;
  double prev_err = 0.25;
  for (int q = 1; q <= 4; ++q) {
    y_hand = y_hand - (y_hand - y_hand * y_hand) / (1.0 - 2.0 * y_hand);
    FixedPointResult r = newton_kantorovich(g, jac, y0, q, 0.0);
    CHECK(r.y(0) == doctest::Approx(y_hand).epsilon(1e-8));
    const double err = std::abs(r.y(0));
    CHECK(err <= 2.0 * prev_err * prev_err);  // quadratic decay
    prev_err = err;
  }
}

TEST_CASE("anderson with memory 0 reproduces successive approximation exactly") {
  std::mt19937 gen(31);
  const int n = 15;
  Eigen::MatrixXd f = 0.9 * oracles::random_row_stochastic(gen, n);
  Eigen::VectorXd b = oracles::random_vector(gen, n);
  auto g = [&](const Eigen::Ref<const Eigen::VectorXd>& y) { return Eigen::VectorXd(b + f * y); };
  Eigen::VectorXd y0 = oracles::random_vector(gen, n);
  FixedPointResult sa = successive_approx(g, y0, 7, 0.0);
  FixedPointResult ad = anderson_accelerate(g, y0, 7, 0, 0.0);
  CHECK((sa.y - ad.y).norm() == 0.0);
  CHECK(sa.report.iterations_used == ad.report.iterations_used);
}

TEST_CASE("anderson reaches the affine fixed point of 0.5y + 1 within three iterations") {
  auto g = [](const Eigen::Ref<const Eigen::VectorXd>& y) {
    return Eigen::VectorXd(0.5 * y.array() + 1.0);
  };
  FixedPointResult r = anderson_accelerate(g, Eigen::VectorXd::Zero(1), 3, 5, 1e-12);
  CHECK(r.y(0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.report.iterations_used <= 3);
}

TEST_CASE("anderson converges in fewer iterations than SA on a slow contraction") {
  std::mt19937 gen(37);
  const int n = 40;
  Eigen::MatrixXd f = 0.95 * oracles::random_row_stochastic(gen, n);
  Eigen::VectorXd b = oracles::random_vector(gen, n);
  auto g = [&](const Eigen::Ref<const Eigen::VectorXd>& y) { return Eigen::VectorXd(b + f * y); };
  Eigen::VectorXd y0 = Eigen::VectorXd::Zero(n);
  FixedPointResult sa = successive_approx(g, y0, 5000, 1e-10);
  FixedPointResult ad = anderson_accelerate(g, y0, 5000, 5, 1e-10);
  CHECK(ad.report.converged);
  CHECK(ad.report.iterations_used < sa.report.iterations_used);
}

TEST_CASE("bb_step_size examples") {
  Eigen::VectorXd u(2);
  u << 1.0, -2.0;
  BbStep equal = bb_step_size(u, u, 3, 10.0);
  CHECK(equal.alpha == doctest::Approx(1.0));
  CHECK_FALSE(equal.used_fallback);

  BbStep k0 = bb_step_size(Eigen::VectorXd(), Eigen::VectorXd(), 0, 2.0);
  CHECK(k0.alpha == doctest::Approx(0.5));
  BbStep k0_small = bb_step_size(Eigen::VectorXd(), Eigen::VectorXd(), 0, 0.25);
  CHECK(k0_small.alpha == doctest::Approx(1.0));  // min(1, 1/phi0)

  Eigen::VectorXd dp(2), dphi(2);
  dp << 1, 0;
  dphi << 2, 0;
  CHECK(bb_step_size(dp, dphi, 1, 1.0).alpha == doctest::Approx(0.5));

  Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  BbStep fb = bb_step_size(dp, zero, 2, 4.0);
  CHECK(fb.used_fallback);
  CHECK(fb.alpha == doctest::Approx(0.25));
}

TEST_CASE("solver reports respect the iteration cap and tolerance contract") {
  std::mt19937 gen(41);
  const int n = 25;
  Eigen::MatrixXd f = 0.5 * oracles::random_row_stochastic(gen, n);
  Eigen::VectorXd b = oracles::random_vector(gen, n);
  auto g = [&](const Eigen::Ref<const Eigen::VectorXd>& y) { return Eigen::VectorXd(b + f * y); };
  FixedPointResult r = successive_approx(g, Eigen::VectorXd::Zero(n), 500, 1e-9);
  CHECK(r.report.iterations_used <= 500);
  CHECK(r.report.converged);
  CHECK(r.report.final_residual_norm <= 1e-9);
}
