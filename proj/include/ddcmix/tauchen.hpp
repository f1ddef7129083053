#pragma once

#include <Eigen/Dense>
#include <vector>

namespace ddcmix {

/// AR(1) specification y' = intercept + action_shift * a + persistence * y + sd * eps,
/// discretized on grid_points equally spaced nodes spanning span_sigmas long-run
/// standard deviations around the long-run mean(s).
struct Ar1Spec {
  double intercept = 0.0;
  double persistence = 0.0;
  double innovation_sd = 1.0;
  double action_shift = 0.0;      // added per unit of the conditioning action
  int conditioning_actions = 1;   // 1 = action-independent process
  int grid_points = 6;
  double span_sigmas = 3.0;
};

struct TauchenResult {
  Eigen::VectorXd grid;
  std::vector<Eigen::MatrixXd> transition;  // one row-stochastic matrix per conditioning action
};

/// Tauchen discretization. With conditioning_actions > 1 the grid spans the
/// union of the per-action long-run means plus/minus span_sigmas * sigma_LR,
/// and one transition matrix is returned per action.
TauchenResult tauchen_discretize(const Ar1Spec& spec);

/// Standard normal CDF.
double normal_cdf(double x);

}  // namespace ddcmix
