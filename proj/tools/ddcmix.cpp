#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ddcmix/harness.hpp"

namespace {

int run_study_cmd(const std::string& config_path, const std::string& out_dir,
                  const std::string& format, int workers, long long seed_override) {
  ddcmix::StudyConfig config = ddcmix::load_study_config(config_path);
  if (!out_dir.empty()) config.output_dir = out_dir;
  if (workers > 0) config.workers = workers;
  if (seed_override >= 0) config.seed = static_cast<std::uint64_t>(seed_override);
  ddcmix::StudyResult result = ddcmix::run_study(config);
  ddcmix::emit_tables(result, format);
  std::cout << ddcmix::cells_to_csv(result.cells);
  return 0;
}

int run_simulate_cmd(const std::string& config_path, const std::string& out_path,
                     const std::string& types_path, long long seed_override) {
  ddcmix::StudyConfig config = ddcmix::load_study_config(config_path);
  if (seed_override >= 0) config.seed = static_cast<std::uint64_t>(seed_override);
  ddcmix::MixtureDDCModel model = ddcmix::build_model(config);
  const ddcmix::CCPProfile policies = ddcmix::solve_all_types(model);
  const bool game = config.design == "entry_game";
  const int markets = game ? config.entry_game.markets : config.entry_exit.markets;
  const int periods = game ? config.entry_game.periods : config.entry_exit.periods;
  const int burn_in = game ? config.entry_game.burn_in : config.entry_exit.burn_in;
  ddcmix::SimulatedPanel sim = ddcmix::simulate_panel(model, policies, model.type_weights(),
                                                      markets, periods, config.seed, burn_in);
  sim.panel.save_csv(out_path);
  if (!types_path.empty()) {
    std::ofstream types(types_path);
    if (!types) throw std::runtime_error("cannot write " + types_path);
    types << "market,type\n";
    for (std::size_t i = 0; i < sim.types.size(); ++i) types << i << ',' << sim.types[i] << '\n';
  }
  std::cout << "wrote " << out_path << " (" << markets << " markets x " << periods
            << " periods)\n";
  return 0;
}

int run_estimate_cmd(const std::string& config_path, const std::string& panel_path,
                     const std::string& method, int q, const std::string& report_path) {
  ddcmix::StudyConfig config = ddcmix::load_study_config(config_path);
  if (!method.empty()) config.methods = {ddcmix::method_from_string(method)};
  if (q != 0) config.q_values = {q};
  ddcmix::PanelData panel = ddcmix::PanelData::load_csv(panel_path);
  ddcmix::MixtureDDCModel model = ddcmix::build_model(config);
  ddcmix::EstimateOnceResult result = ddcmix::estimate_once(config, panel);
  const std::string report = ddcmix::estimate_report_json(config, model, result);
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw std::runtime_error("cannot write " + report_path);
    out << report << '\n';
  }
  std::cout << report << '\n';
  return result.estimation.outer.converged ? 0 : 1;
}

int run_bench_cmd(const std::string& config_path, const std::string& out_path) {
  ddcmix::StudyConfig config = ddcmix::load_study_config(config_path);
  std::vector<ddcmix::BenchRow> rows = ddcmix::bench_inner(config);
  std::printf("%-12s %10s %6s %12s %s\n", "solver", "seconds", "iters", "residual", "converged");
  for (const auto& r : rows)
    std::printf("%-12s %10.4f %6d %12.3e %s\n", r.label.c_str(), r.seconds, r.iterations,
                r.residual, r.converged ? "yes" : "no");
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << ddcmix::bench_to_json(rows) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-mixture dynamic discrete choice estimation with truncated inner solvers"};
  app.require_subcommand(1);

  std::string config_path, out_dir, format = "both", panel_path, method, report_path;
  std::string out_path, types_path;
  int workers = 0, q = 0;
  long long seed = -1;

  CLI::App* study = app.add_subcommand("study", "Run a Monte Carlo study over the method x q grid");
  study->add_option("config", config_path, "JSON study configuration")->required();
  study->add_option("--out", out_dir, "output directory (overrides config)");
  study->add_option("--format", format, "csv, json, or both")->capture_default_str();
  study->add_option("--workers", workers, "worker threads (overrides config and env)");
  study->add_option("--seed", seed, "master seed override");

  CLI::App* simulate = app.add_subcommand("simulate", "Simulate a panel under the configured design");
  simulate->add_option("config", config_path, "JSON study configuration")->required();
  simulate->add_option("--out", out_path, "panel CSV path")->required();
  simulate->add_option("--types-out", types_path, "optional CSV with the hidden type labels");
  simulate->add_option("--seed", seed, "seed override");

  CLI::App* estimate = app.add_subcommand("estimate", "Estimate a panel with one method");
  estimate->add_option("config", config_path, "JSON study configuration")->required();
  estimate->add_option("panel", panel_path, "panel CSV produced by simulate or in the same schema")
      ->required();
  estimate->add_option("--method", method, "method override (e.g. PV_GMRES)");
  estimate->add_option("--q", q, "inner iteration cap override (-1 for full convergence)");
  estimate->add_option("--out", report_path, "write the JSON report here");

  CLI::App* bench = app.add_subcommand("bench-inner", "Benchmark candidate inner solvers");
  bench->add_option("config", config_path, "JSON study configuration")->required();
  bench->add_option("--out", out_path, "write benchmark rows as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (study->parsed()) return run_study_cmd(config_path, out_dir, format, workers, seed);
    if (simulate->parsed()) return run_simulate_cmd(config_path, out_path, types_path, seed);
    if (estimate->parsed()) return run_estimate_cmd(config_path, panel_path, method, q, report_path);
    if (bench->parsed()) return run_bench_cmd(config_path, out_path);
  } catch (const ddcmix::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
