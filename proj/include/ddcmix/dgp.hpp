#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "ddcmix/model.hpp"

namespace ddcmix {

/// Single-agent entry/exit design with latent types. State is
/// (a_{-1}; w, z1, z2, z3, z4); flow payoff of an active firm is
/// VP - FC - (1 - a_{-1}) EC with VP = (t0 + t1 z1 + t2 z2) exp(w),
/// FC = t3 + t4 z3, EC = t5 + t6 z4 (signs absorbed into the basis).
struct EntryExitSpec {
  bool finite_dependence = true;  // productivity law: FD drops the action term
  double beta = 0.95;
  int grid_points = 6;
  double span_sigmas = 3.0;
  std::vector<Eigen::VectorXd> type_params;  // 7 coordinates per type
  Eigen::VectorXd type_weights;
  int markets = 5000;
  int periods = 20;
  std::uint64_t seed = 1;
  int burn_in = 100;

  /// The three-type configuration used by the simulation studies.
  static EntryExitSpec defaults();
};

MixtureDDCModel build_entry_exit_model(const EntryExitSpec& spec);

/// J-firm entry game: state is (market size s, lagged activity profile);
/// an active firm earns rs*s - rc*log(1 + #active rivals) - ec*(1 - a_{-1}) - fc_j.
struct EntryGameSpec {
  int firms = 7;
  double theta_rs = 1.0;
  double theta_rc = 2.4;
  double theta_ec = 1.0;
  Eigen::VectorXd theta_fc;  // per firm; empty uses 1.9, 1.8, ... descending
  double beta = 0.95;
  Eigen::VectorXd size_grid;        // empty uses 1..5
  Eigen::MatrixXd size_transition;  // empty uses the 5-state tridiagonal chain
  int markets = 1600;
  int periods = 10;
  std::uint64_t seed = 1;
  int burn_in = 100;

  static EntryGameSpec defaults(int firms = 7);
};

MixtureDDCModel build_entry_game_model(const EntryGameSpec& spec);

/// Optimal policy of one latent type in a single-agent model: Bellman fixed
/// point (Newton with GMRES inner solves, sup-norm residual <= tol) and its
/// logit CCPs.
struct TypePolicy {
  Eigen::VectorXd value;
  Eigen::MatrixXd ccp;  // |X| x |A|
};
TypePolicy solve_type_policy(const MixtureDDCModel& model, int type, double tol = 1e-10);

/// Markov perfect equilibrium CCPs for one type of a game, found by damped
/// best-response iteration (Barzilai-Borwein step) from the given start.
CCPProfile solve_game_equilibrium(const MixtureDDCModel& model, int type, const CCPProfile& start,
                                  double tol = 1e-10, int max_iters = 5000);

/// Exact per-firm conditional values at a CCP profile (rivals fixed at p).
std::vector<Eigen::MatrixXd> equilibrium_conditional_values(const MixtureDDCModel& model, int type,
                                                            const CCPProfile& p, double tol = 1e-12);

/// Equilibrium/policy CCPs for every type, as consumed by simulate_panel.
CCPProfile solve_all_types(const MixtureDDCModel& model, double tol = 1e-10);

struct SimulatedPanel {
  PanelData panel;
  std::vector<int> types;  // hidden type label per market
};

/// Simulates a panel under per-type policies. Each market draws its type
/// once; states evolve through the model kernel; actions are drawn from the
/// type's CCPs. Deterministic per seed via counter-based draws keyed on
/// (seed, market, period, stream). start_state < 0 uses lag 0 with every
/// exogenous component at its middle grid point.
SimulatedPanel simulate_panel(const MixtureDDCModel& model, const CCPProfile& policies,
                              const Eigen::Ref<const Eigen::VectorXd>& pi_star, int markets,
                              int periods, std::uint64_t seed, int burn_in, int start_state = -1);

/// Frequency CCP estimator with Laplace smoothing; unvisited states fall back
/// to uniform. The same estimate is replicated across types.
CCPProfile frequency_ccp(const PanelData& data, const MixtureDDCModel& model,
                         double smoothing = 0.5);

/// Sieve-logit initialization (single-agent models): per-market CCPs are
/// clustered with k-means, each cluster seeds a polynomial sieve logit, and a
/// reduced-form EM over the sieve CCPs produces (P0, pi0). random_init skips
/// the clustering and draws sieve coefficients from a scaled normal.
struct SieveInitConfig {
  int degree = 2;
  int num_types = 1;
  int kmeans_restarts = 20;
  double em_tol = 1e-6;
  int em_max_iters = 500;
  bool random_init = false;
  double random_scale = 1.0;
};

struct SieveInit {
  CCPProfile ccps;
  Eigen::VectorXd pi;
};

SieveInit sieve_logit_init(const PanelData& data, const MixtureDDCModel& model,
                           const SieveInitConfig& config, std::uint64_t seed);

/// Degree-d polynomial features of the state (lag digits and standardized
/// exogenous values), one row per state. Exposed for tests.
Eigen::MatrixXd state_poly_features(const MixtureDDCModel& model, int degree);

}  // namespace ddcmix
