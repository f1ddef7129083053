#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "ddcmix/linear_operator.hpp"
#include "ddcmix/types.hpp"

namespace ddcmix {

using FixedPointMap = std::function<Eigen::VectorXd(const Eigen::Ref<const Eigen::VectorXd>&)>;
using JacobianFactory = std::function<LinearOperator(const Eigen::Ref<const Eigen::VectorXd>&)>;

struct GmresResult {
  Eigen::VectorXd y;
  SolverReport report;
  std::vector<double> residual_history;  // Euclidean residual after each Arnoldi step
};

/// Restart-free GMRES on A y = b from warm start y0, at most q Arnoldi steps
/// (q is clamped to the dimension; kInfIters means "up to the dimension").
/// The least-squares problem is updated with Givens rotations, so the
/// residual norm is available after every step. Stops on residual <= tol or
/// lucky breakdown. Residual norms here are Euclidean.
GmresResult gmres(const LinearOperator& a, const Eigen::Ref<const Eigen::VectorXd>& b,
                  const Eigen::Ref<const Eigen::VectorXd>& y0, int q, double tol);

struct FixedPointResult {
  Eigen::VectorXd y;
  SolverReport report;
};

/// Applies G at most q times; stops early when the sup-norm step falls to tol.
FixedPointResult successive_approx(const FixedPointMap& g,
                                   const Eigen::Ref<const Eigen::VectorXd>& y0, int q, double tol);

/// Newton-Kantorovich on Y = G(Y): each step solves (I - dG) d = -(Y - G(Y))
/// with an inner GMRES and updates Y += d. jacobian_of_g(Y) must return the
/// linear map u -> dG(Y) u.
FixedPointResult newton_kantorovich(const FixedPointMap& g, const JacobianFactory& jacobian_of_g,
                                    const Eigen::Ref<const Eigen::VectorXd>& y0, int q, double tol);

/// Type-II Anderson acceleration with the given memory window. memory == 0
/// reproduces successive approximation exactly. An ill-conditioned mixing
/// system (condition estimate above 1e12) falls back to a plain SA step.
FixedPointResult anderson_accelerate(const FixedPointMap& g,
                                     const Eigen::Ref<const Eigen::VectorXd>& y0, int q, int memory,
                                     double tol);

struct BbStep {
  double alpha = 1.0;
  bool used_fallback = false;
};

/// Barzilai-Borwein step length: alpha_k = |dP|^2 / <dP, dPhi> for k >= 1,
/// alpha_0 = min(1, 1 / |Phi0|). A vanishing inner product at k >= 1 returns
/// the k = 0 fallback with the flag set.
BbStep bb_step_size(const Eigen::Ref<const Eigen::VectorXd>& delta_p,
                    const Eigen::Ref<const Eigen::VectorXd>& delta_phi, int k, double phi0_norm);

}  // namespace ddcmix
