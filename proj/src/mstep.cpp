#include <cmath>
#include <limits>

#include "ddcmix/estimator.hpp"

namespace ddcmix {

MStepResult m_step(const MStepObjective& objective, const Eigen::VectorXd& theta_start,
                   double grad_tol, int max_iters) {
  const int d = objective.dim;
  Eigen::VectorXd theta = theta_start.size() == d ? theta_start : Eigen::VectorXd::Zero(d);

  double value = 0.0;
  Eigen::VectorXd grad(d);
  Eigen::MatrixXd hess(d, d);
  objective.eval(theta, &value, &grad, &hess);

  MStepResult out;
  out.grad_norm = grad.lpNorm<Eigen::Infinity>();
  int it = 0;
  for (; it < max_iters && out.grad_norm > grad_tol; ++it) {
    Eigen::MatrixXd neg_h = -hess;
    // Tiny ridge keeps the factorization stable when a feature barely varies.
    neg_h.diagonal().array() += 1e-12 * (1.0 + neg_h.diagonal().maxCoeff());
    Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_h);
    Eigen::VectorXd dir = ldlt.solve(grad);
    if (!dir.allFinite() || grad.dot(dir) <= 0.0) dir = grad;  // gradient ascent fallback

    double step = 1.0;
    bool improved = false;
    const double slope = grad.dot(dir);
    for (int bt = 0; bt < 50; ++bt) {
      Eigen::VectorXd cand = theta + step * dir;
      double cand_value;
      objective.eval(cand, &cand_value, nullptr, nullptr);
      if (std::isfinite(cand_value) && cand_value >= value + 1e-4 * step * slope - 1e-15) {
        theta = std::move(cand);
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved)
      throw MStepError("m_step: backtracking failed with gradient sup-norm " +
                           std::to_string(out.grad_norm),
                       out.grad_norm);
    objective.eval(theta, &value, &grad, &hess);
    out.grad_norm = grad.lpNorm<Eigen::Infinity>();
  }
  if (out.grad_norm > grad_tol)
    throw MStepError("m_step: no convergence after " + std::to_string(max_iters) +
                         " iterations, gradient sup-norm " + std::to_string(out.grad_norm),
                     out.grad_norm);
  out.theta = std::move(theta);
  out.objective = value;
  out.iterations = it;
  return out;
}

}  // namespace ddcmix
