#pragma once

// Test-only oracles, independent of the library's computation paths.

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "ddcmix/model.hpp"

namespace oracles {

/// Dense Kronecker product, the brute-force reference for kron_matvec.
inline Eigen::MatrixXd dense_kron(const std::vector<Eigen::MatrixXd>& factors) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Ones(1, 1);
  for (const auto& f : factors) {
    Eigen::MatrixXd next(out.rows() * f.rows(), out.cols() * f.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (Eigen::Index j = 0; j < out.cols(); ++j)
        next.block(i * f.rows(), j * f.cols(), f.rows(), f.cols()) = out(i, j) * f;
    out = std::move(next);
  }
  return out;
}

inline Eigen::MatrixXd random_matrix(std::mt19937& gen, int rows, int cols) {
  std::normal_distribution<double> dist;
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = dist(gen);
  return m;
}

inline Eigen::VectorXd random_vector(std::mt19937& gen, int n) {
  return random_matrix(gen, n, 1);
}

inline Eigen::MatrixXd random_row_stochastic(std::mt19937& gen, int n) {
  std::uniform_real_distribution<double> dist(0.05, 1.0);
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
      m(i, j) = dist(gen);
      s += m(i, j);
    }
    m.row(i) /= s;
  }
  return m;
}

/// Random probability rows, bounded away from zero.
inline Eigen::MatrixXd random_ccp(std::mt19937& gen, int states, int actions) {
  std::uniform_real_distribution<double> dist(0.05, 1.0);
  Eigen::MatrixXd m(states, actions);
  for (int i = 0; i < states; ++i) {
    double s = 0.0;
    for (int j = 0; j < actions; ++j) {
      m(i, j) = dist(gen);
      s += m(i, j);
    }
    m.row(i) /= s;
  }
  return m;
}

/// Central finite-difference gradient of a scalar function.
template <typename F>
Eigen::VectorXd fd_gradient(const F& f, const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Eigen::VectorXd xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    g(k) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// A tiny hand-assembled single-agent model for exact-arithmetic checks:
/// `lag` states x one exogenous component, linear basis supplied directly.
inline ddcmix::MixtureDDCModel toy_model(int num_actions, Eigen::MatrixXd exo_transition,
                                         Eigen::VectorXd exo_grid,
                                         std::vector<Eigen::MatrixXd> basis, double beta,
                                         std::vector<Eigen::VectorXd> theta,
                                         Eigen::VectorXd weights) {
  ddcmix::StateSpace space(1, num_actions, {std::move(exo_grid)});
  std::vector<ddcmix::ExoTransition> comps(1);
  comps[0].mats = {std::move(exo_transition)};
  ddcmix::TransitionKernel kernel(space.num_joint_actions(), std::move(comps));
  ddcmix::MixtureDDCModel::Config cfg{.num_types = static_cast<int>(theta.size()),
                                      .space = std::move(space),
                                      .kernel = std::move(kernel),
                                      .basis = std::move(basis),
                                      .beta = beta,
                                      .type_params = std::move(theta),
                                      .type_weights = std::move(weights),
                                      .linear_utility = true};
  return ddcmix::MixtureDDCModel(std::move(cfg));
}

}  // namespace oracles
