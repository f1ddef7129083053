#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "ddcmix/policy_valuation.hpp"
#include "ddcmix/solvers.hpp"

namespace ddcmix {

/// The fixed-point object Y carried between outer iterations. The payload
/// layout depends on the variant:
///  - ValueFunction: one |X| x 1 column per firm
///  - WComponents:   one |X| x (d+1) matrix per firm, columns [W_1..W_d, W_P]
///  - CondValues:    payload[0] stacked (J|X||A|) x cols (EPL)
///  - CondValueDiff: payload[0] is |X| x |A| (Euler, single agent)
struct NuisanceBlock {
  enum class Kind { ValueFunction, WComponents, CondValues, CondValueDiff };
  Kind kind = Kind::ValueFunction;
  std::vector<Eigen::MatrixXd> payload;

  bool finite() const {
    for (const auto& m : payload)
      if (!m.allFinite()) return false;
    return true;
  }
};

/// A nonlinear fixed-point mapping Y = G(Y) with an optional Jacobian for
/// Newton-type inner algorithms.
struct NonlinearSystem {
  Eigen::Index dim = 0;
  FixedPointMap g;
  JacobianFactory jacobian;  // empty when only SA/Anderson apply
};

/// A fixed-point equation packaged with its evaluation context, consumed by
/// the truncated inner algorithms. Exactly one of linear/nonlinear is set.
struct FixedPointProblem {
  enum class Kind { PolicyValuationV, WComponents, Bellman, Euler, Epl };
  Kind kind = Kind::PolicyValuationV;
  bool theta_separable = false;
  std::optional<LinearSystem> linear;
  std::optional<NonlinearSystem> nonlinear;

  Eigen::Index dim() const { return linear ? linear->op.dim() : nonlinear->dim; }
  Eigen::Index cols() const { return linear ? linear->rhs.cols() : 1; }
};

enum class InnerAlgorithm { SA, GMRES, Newton, Anderson };

/// A truncated inner solver: at most q iterations per column from the given
/// warm start. q == kInfIters iterates to tol under a hard cap (the dimension
/// for GMRES, 100 * dimension for fixed-point iterations).
class GammaSolver {
 public:
  using SolveFn = std::function<std::pair<Eigen::MatrixXd, SolverReport>(const Eigen::MatrixXd&)>;

  GammaSolver(SolveFn fn, InnerAlgorithm alg, int q) : fn_(std::move(fn)), alg_(alg), q_(q) {}

  std::pair<Eigen::MatrixXd, SolverReport> operator()(const Eigen::MatrixXd& warm) const {
    return fn_(warm);
  }
  InnerAlgorithm algorithm() const noexcept { return alg_; }
  int q() const noexcept { return q_; }

 private:
  SolveFn fn_;
  InnerAlgorithm alg_;
  int q_;
};

/// Builds the truncated solver for a problem/algorithm pair. Incompatible
/// pairs (GMRES without a linear view, Newton without a Jacobian) raise
/// ConfigError. The returned report aggregates across right-hand-side
/// columns: iterations is the maximum, the residual the worst, converged
/// requires every column.
GammaSolver make_gamma(const FixedPointProblem& problem, InnerAlgorithm algorithm, int q,
                       double tol, int anderson_memory = 5);

InnerAlgorithm inner_algorithm_from_string(const std::string& s);
std::string to_string(InnerAlgorithm a);

}  // namespace ddcmix
