#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ddcmix/dgp.hpp"
#include "ddcmix/fixed_point.hpp"
#include "ddcmix/model.hpp"

namespace ddcmix {

/// Estimator-algorithm combinations, named as they appear in output tables.
enum class Method { PV_GMRES, PV_SA, BM_SA, BM_AD, BM_NT, EE_SA, EPL_GMRES, PV_EPL_GMRES };

Method method_from_string(const std::string& s);
std::string to_string(Method m);

enum class CcpUpdateMode { Plain, Spectral };

struct EstimatorOptions {
  Method method = Method::PV_GMRES;
  int q = 4;  // kInfIters solves the inner problem to tolerance every iteration
  double eps_outer = 1e-3;
  double inner_tol = 1e-8;
  int max_outer = 100;
  CcpUpdateMode ccp_mode = CcpUpdateMode::Plain;
  double mstep_grad_tol = 1e-8;
  int mstep_max_iters = 50;
  int anderson_memory = 5;
};

struct EstimationInit {
  CCPProfile p0;
  Eigen::VectorXd pi0;
  std::vector<Eigen::VectorXd> theta0;  // optional warm start; empty means zeros
};

struct PosteriorWeights {
  Eigen::MatrixXd values;  // markets x types, rows sum to one
};

struct EStepResult {
  PosteriorWeights weights;
  Eigen::VectorXd pi_new;
  double log_pseudo_likelihood;  // mean per market
};

/// Posterior type weights and updated mixing weights, computed in log space.
EStepResult e_step(const CCPProfile& p, const Eigen::Ref<const Eigen::VectorXd>& pi,
                   const PanelData& data);

/// Per-market aggregated observation counts, sufficient for every likelihood
/// evaluation the estimator performs.
struct MarketObs {
  int state;
  int firm;
  int action;
  double count;
};
struct MarketCounts {
  std::vector<MarketObs> obs;
};
std::vector<MarketCounts> build_market_counts(const PanelData& data);

EStepResult e_step_counts(const CCPProfile& p, const Eigen::Ref<const Eigen::VectorXd>& pi,
                          const std::vector<MarketCounts>& markets);

struct IterationRecord {
  double dp = 0.0;      // sup-norm CCP change
  double dtheta = 0.0;  // sup-norm parameter change
  double dv_rel = 0.0;  // sup-norm nuisance change / (1 + sup-norm level)
  double dpi = 0.0;     // sup-norm mixing weight change
  double log_pl = 0.0;
  double seconds = 0.0;
};

struct EstimationState {
  Eigen::VectorXd pi;
  std::vector<Eigen::VectorXd> theta;
  std::vector<NuisanceBlock> nuisance;  // one per type
  CCPProfile ccps;
  int iteration = 0;
  double log_pseudo_likelihood = 0.0;
};

/// Conditional values affine in theta: v_j(x,a) = z_j.row(x*|A|+a) theta +
/// offset_j(x*|A|+a). Produced by the theta-separable routes at convergence
/// and consumed by the standard-error computation.
struct AffineValues {
  std::vector<Eigen::MatrixXd> z;       // per firm, (|X|*|A|) x d
  std::vector<Eigen::VectorXd> offset;  // per firm, |X|*|A|
};

struct EstimationResult {
  EstimationState state;
  SolverReport outer;  // iterations_used = outer iterations
  std::vector<IterationRecord> trace;
  std::optional<std::vector<AffineValues>> affine_values;  // per type, separable routes only
};

/// The EM-NPL(q) outer loop: E-step, per-type M-step through the truncated
/// inner solver, nuisance update, CCP update, until
/// max(dP, dtheta, dV_rel, dpi) <= eps_outer or max_outer iterations. The
/// first outer iteration always solves the inner problem to tolerance to
/// initialize the nuisance block; later iterations run at most q inner steps
/// from the previous block. Non-convergence is reported, never thrown.
EstimationResult em_npl_q_run(const MixtureDDCModel& model, const PanelData& data,
                              const EstimationInit& init, const EstimatorOptions& options);

/// CCP update given the freshly evaluated CCP mapping. Spectral mode applies
/// a Barzilai-Borwein damped step on the fixed-point residual, then floors
/// and renormalizes.
struct SpectralHistory {
  int k = 0;
  Eigen::VectorXd p_prev, phi_prev;
};
CCPProfile ccp_update(const CCPProfile& lambda, const CCPProfile& p_prev, CcpUpdateMode mode,
                      SpectralHistory& history);

/// Damped-Newton maximizer of a concave objective; eval must fill value,
/// gradient, and a negative-semidefinite curvature matrix.
struct MStepObjective {
  int dim = 0;
  std::function<void(const Eigen::VectorXd& theta, double* value, Eigen::VectorXd* grad,
                     Eigen::MatrixXd* hess)>
      eval;
};
struct MStepResult {
  Eigen::VectorXd theta;
  double objective = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
};
MStepResult m_step(const MStepObjective& objective, const Eigen::VectorXd& theta_start,
                   double grad_tol, int max_iters);

/// Multi-start driver: runs em_npl_q_run from n_starts seeded initializations
/// and returns the converged run with the highest final pseudo-likelihood.
/// Non-converged runs are excluded; if no start converges a MultiStartError
/// carrying per-start diagnostics is thrown.
class MultiStartError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using InitFactory = std::function<EstimationInit(int start_index, std::uint64_t start_seed)>;

struct MultiStartResult {
  EstimationResult best;
  int best_start = -1;
  std::vector<double> start_log_pl;
  std::vector<bool> start_converged;
};

MultiStartResult multi_start(const MixtureDDCModel& model, const PanelData& data,
                             const EstimatorOptions& options, const InitFactory& make_init,
                             int n_starts, std::uint64_t seed);

/// Type permutation minimizing sum_m |theta_hat_perm(m) - theta_star_m|^2 +
/// |pi_hat_perm - pi_star|^2, by exhaustive search (M <= 8).
struct LabelMatch {
  std::vector<int> permutation;  // permutation[m] indexes the estimate matching truth m
  double mse = 0.0;
};
LabelMatch match_labels(const std::vector<Eigen::VectorXd>& theta_hat,
                        const Eigen::Ref<const Eigen::VectorXd>& pi_hat,
                        const std::vector<Eigen::VectorXd>& theta_star,
                        const Eigen::Ref<const Eigen::VectorXd>& pi_star);

/// Information-matrix covariance for theta-separable linear-utility runs:
/// (N * Hbar)^{-1} with Hbar the per-market average negative Hessian of the
/// mixture log pseudo-likelihood over (theta^1..theta^M, pi_1..pi_{M-1}),
/// computed analytically and cross-checked against central finite
/// differences of the score when fd_check is set.
struct CovarianceResult {
  Eigen::MatrixXd covariance;
  Eigen::VectorXd std_errors;
  double fd_max_rel_err = 0.0;
};
CovarianceResult standard_errors_linear(const MixtureDDCModel& model, const PanelData& data,
                                        const EstimationResult& result, bool fd_check = true);

}  // namespace ddcmix
