#include "ddcmix/fixed_point.hpp"

#include <chrono>
#include <stdexcept>

namespace ddcmix {

namespace {

using Clock = std::chrono::steady_clock;

int resolve_cap(int q, Eigen::Index dim, InnerAlgorithm alg) {
  if (q != kInfIters) {
    if (q < 1) throw std::invalid_argument("make_gamma: q must be >= 1 or the infinity sentinel");
    return q;
  }
  switch (alg) {
    case InnerAlgorithm::GMRES:
      return static_cast<int>(dim);
    case InnerAlgorithm::Newton:
      return 100;
    default:
      return static_cast<int>(100 * dim);
  }
}

/// Linear fixed point Y = b + (I - A) Y seen as a mapping, for SA/Anderson.
FixedPointMap linear_as_map(const LinearSystem& sys, Eigen::VectorXd b) {
  auto bp = std::make_shared<Eigen::VectorXd>(std::move(b));
  const LinearOperator* op = &sys.op;
  return [op, bp](const Eigen::Ref<const Eigen::VectorXd>& y) {
    return Eigen::VectorXd(*bp + y - op->apply(y));
  };
}

}  // namespace

GammaSolver make_gamma(const FixedPointProblem& problem, InnerAlgorithm algorithm, int q,
                       double tol, int anderson_memory) {
  if (!problem.linear && !problem.nonlinear)
    throw ConfigError("make_gamma: problem carries no system");
  if (algorithm == InnerAlgorithm::GMRES && !problem.linear)
    throw ConfigError("make_gamma: GMRES requires a linear-system view of the problem");
  if (algorithm == InnerAlgorithm::Newton && !problem.linear &&
      (!problem.nonlinear || !problem.nonlinear->jacobian))
    throw ConfigError("make_gamma: Newton requires a Jacobian");

  const int cap = resolve_cap(q, problem.dim(), algorithm);
  // The problem is captured by value via shared members; copy what we need.
  auto prob = std::make_shared<FixedPointProblem>(problem);

  GammaSolver::SolveFn fn = [prob, algorithm, cap, tol,
                             anderson_memory](const Eigen::MatrixXd& warm) {
    const auto t0 = Clock::now();
    if (warm.rows() != prob->dim() || warm.cols() != prob->cols())
      throw std::invalid_argument("GammaSolver: warm start has the wrong shape");
    Eigen::MatrixXd out(warm.rows(), warm.cols());
    SolverReport agg;
    agg.converged = true;
    for (Eigen::Index c = 0; c < warm.cols(); ++c) {
      SolverReport rep;
      if (prob->linear) {
        const LinearSystem& sys = *prob->linear;
        switch (algorithm) {
          case InnerAlgorithm::GMRES: {
            GmresResult r = gmres(sys.op, sys.rhs.col(c), warm.col(c), cap, tol);
            out.col(c) = r.y;
            rep = r.report;
            break;
          }
          case InnerAlgorithm::Newton: {
            // Linear problems solve exactly in one Newton step; delegate the
            // inner solve to GMRES on the same operator.
            GmresResult r = gmres(sys.op, sys.rhs.col(c), warm.col(c),
                                  static_cast<int>(sys.op.dim()), tol);
            out.col(c) = r.y;
            rep = r.report;
            rep.iterations_used = std::min(rep.iterations_used, 1);
            break;
          }
          case InnerAlgorithm::SA: {
            FixedPointResult r =
                successive_approx(linear_as_map(sys, sys.rhs.col(c)), warm.col(c), cap, tol);
            out.col(c) = r.y;
            rep = r.report;
            break;
          }
          case InnerAlgorithm::Anderson: {
            FixedPointResult r = anderson_accelerate(linear_as_map(sys, sys.rhs.col(c)),
                                                     warm.col(c), cap, anderson_memory, tol);
            out.col(c) = r.y;
            rep = r.report;
            break;
          }
        }
      } else {
        const NonlinearSystem& sys = *prob->nonlinear;
        switch (algorithm) {
          case InnerAlgorithm::SA: {
            FixedPointResult r = successive_approx(sys.g, warm.col(c), cap, tol);
            out.col(c) = r.y;
            rep = r.report;
            break;
          }
          case InnerAlgorithm::Newton: {
            FixedPointResult r = newton_kantorovich(sys.g, sys.jacobian, warm.col(c), cap, tol);
            out.col(c) = r.y;
            rep = r.report;
            break;
          }
          case InnerAlgorithm::Anderson: {
            FixedPointResult r = anderson_accelerate(sys.g, warm.col(c), cap, anderson_memory, tol);
            out.col(c) = r.y;
            rep = r.report;
            break;
          }
          case InnerAlgorithm::GMRES:
            throw ConfigError("make_gamma: GMRES requires a linear-system view");
        }
      }
      agg.iterations_used = std::max(agg.iterations_used, rep.iterations_used);
      agg.final_residual_norm = std::max(agg.final_residual_norm, rep.final_residual_norm);
      agg.converged = agg.converged && rep.converged;
    }
    agg.wall_time = std::chrono::duration<double>(Clock::now() - t0).count();
    return std::make_pair(std::move(out), agg);
  };
  return GammaSolver(std::move(fn), algorithm, q);
}

InnerAlgorithm inner_algorithm_from_string(const std::string& s) {
  if (s == "SA") return InnerAlgorithm::SA;
  if (s == "GMRES") return InnerAlgorithm::GMRES;
  if (s == "Newton" || s == "NT") return InnerAlgorithm::Newton;
  if (s == "Anderson" || s == "AD") return InnerAlgorithm::Anderson;
  throw ConfigError("unknown inner algorithm: " + s);
}

std::string to_string(InnerAlgorithm a) {
  switch (a) {
    case InnerAlgorithm::SA: return "SA";
    case InnerAlgorithm::GMRES: return "GMRES";
    case InnerAlgorithm::Newton: return "Newton";
    case InnerAlgorithm::Anderson: return "Anderson";
  }
  return "?";
}

}  // namespace ddcmix
