#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ddcmix/estimator.hpp"

namespace ddcmix {

/// Study configuration, loadable from a JSON document; CLI flags override
/// individual fields. See the README for the schema.
struct StudyConfig {
  std::string design = "entry_exit_FD";  // entry_exit_FD | entry_exit_NFD | entry_game
  EntryExitSpec entry_exit = EntryExitSpec::defaults();
  EntryGameSpec entry_game = EntryGameSpec::defaults();
  std::vector<Method> methods;
  std::vector<int> q_values;  // kInfIters encodes the full-convergence sentinel
  int replications = 20;
  std::uint64_t seed = 1;
  double eps_outer = 1e-3;
  double inner_tol = 1e-8;
  int max_outer = 100;
  std::string ccp_update = "auto";  // auto | plain | spectral
  std::string init_kind = "auto";   // auto | frequency | sieve
  SieveInitConfig init;
  int n_starts = 1;
  bool mse_include_nonconverged = true;
  std::string output_dir = ".";
  int workers = 0;  // 0: DDCMIX_WORKERS env var, else hardware concurrency

  void validate() const;
};

StudyConfig parse_study_config(const std::string& json_text);
StudyConfig load_study_config(const std::string& path);

/// Model implied by the configured design (with the configured overrides).
MixtureDDCModel build_model(const StudyConfig& config);

/// Per-replication estimation record inside one (method, q) cell.
struct ReplicationRecord {
  int replication = 0;
  bool converged = false;
  double seconds = 0.0;
  int outer_iterations = 0;
  double mse = 0.0;
  double log_pl = 0.0;
};

struct MethodCell {
  Method method = Method::PV_GMRES;
  int q = 4;
  double ct_mean = 0.0;
  double ct_sd = 0.0;
  double mse_mean = 0.0;
  double avg_iter = 0.0;
  double conv_pct = 0.0;
  std::vector<ReplicationRecord> records;
};

struct StudyResult {
  StudyConfig config;
  std::vector<MethodCell> cells;
};

/// Runs the full method x q grid over seeded replications. Simulation and
/// initial CCPs are shared across cells within a replication; timings cover
/// estimation only. Per-replication estimation failures are recorded as
/// non-converged and never abort the study.
StudyResult run_study(const StudyConfig& config);

std::string cells_to_csv(const std::vector<MethodCell>& cells);
std::string study_to_json(const StudyResult& result);
std::vector<MethodCell> cells_from_json(const std::string& json_text);

/// Writes study.csv / study.json into config.output_dir; format is one of
/// csv, json, both.
void emit_tables(const StudyResult& result, const std::string& format);

/// One-shot estimation of a user panel under the configured design/method.
struct EstimateOnceResult {
  Method method = Method::PV_GMRES;
  int q = 4;
  EstimationResult estimation;
  std::optional<CovarianceResult> covariance;  // separable routes only
  double seconds = 0.0;
  int n_starts = 1;
};

EstimateOnceResult estimate_once(const StudyConfig& config, const PanelData& panel);
std::string estimate_report_json(const StudyConfig& config, const MixtureDDCModel& model,
                                 const EstimateOnceResult& result);

/// Stage-1 benchmark: solve the initial fixed-point problem of each candidate
/// inner algorithm once, at the frequency/sieve initial CCPs, and report wall
/// time, iterations, and the final residual.
struct BenchRow {
  std::string label;
  double seconds = 0.0;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};
std::vector<BenchRow> bench_inner(const StudyConfig& config);
std::string bench_to_json(const std::vector<BenchRow>& rows);

/// Shared per-replication initialization (frequency CCPs for games, sieve
/// init for single-agent mixtures), exposed for the acceptance suite.
EstimationInit make_study_init(const StudyConfig& config, const MixtureDDCModel& model,
                               const PanelData& panel, std::uint64_t seed);

EstimatorOptions estimator_options(const StudyConfig& config, Method method, int q);

int resolve_workers(const StudyConfig& config);

}  // namespace ddcmix
