#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include "ddcmix/harness.hpp"
#include "ddcmix/rng.hpp"

using namespace ddcmix;

namespace {

std::string small_mixture_config(int replications = 1, const std::string& extra = "") {
  return R"({
    "design": "entry_exit_FD",
    "entry_exit": {"beta": 0.9, "grid_points": 2, "markets": 200, "periods": 8, "burn_in": 0,
                   "theta": [[1.5, 1.5, -0.3, -0.3, -0.2, -0.3, -1.0],
                             [0.2, 0.2, -0.2, -3.5, -2.0, -0.5, -3.0]],
                   "pi": [0.6, 0.4]},
    "methods": ["PV_GMRES"],
    "q": [4],
    "replications": )" +
         std::to_string(replications) + R"(,
    "seed": 42,
    "output_dir": "/tmp/ddcmix_harness_test")" +
         extra + "}";
}

}  // namespace

TEST_CASE("config parsing and validation errors") {
  CHECK_THROWS_AS(parse_study_config(R"({"design": "entry_exit_FD", "methods": [], "q": [4]})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_study_config(R"({"design": "nope", "methods": ["PV_SA"], "q": [4]})"),
                  ConfigError);
  CHECK_THROWS_AS(
      parse_study_config(
          R"({"design": "entry_exit_NFD", "methods": ["EE_SA"], "q": [4]})"),
      ConfigError);
  CHECK_THROWS_AS(
      parse_study_config(
          R"({"design": "entry_exit_FD", "methods": ["EPL_GMRES"], "q": [4]})"),
      ConfigError);
  StudyConfig ok = parse_study_config(small_mixture_config());
  CHECK(ok.methods.size() == 1);
  CHECK(ok.entry_exit.type_params.size() == 2);

  StudyConfig inf = parse_study_config(
      R"({"design": "entry_exit_FD", "methods": ["PV_SA"], "q": [4, "inf"]})");
  CHECK(inf.q_values[1] == kInfIters);
}

TEST_CASE("study runs, emits tables, and the JSON round-trips") {
  StudyConfig config = parse_study_config(small_mixture_config(2));
  config.workers = 1;
  StudyResult result = run_study(config);
  REQUIRE(result.cells.size() == 1);
  CHECK(result.cells[0].records.size() == 2);
  CHECK(result.cells[0].conv_pct >= 0.0);
  CHECK(result.cells[0].conv_pct <= 100.0);

  const std::string csv = cells_to_csv(result.cells);
  // Header plus one row per (method, q).
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + static_cast<long>(result.cells.size()));

  const std::string json_text = study_to_json(result);
  std::vector<MethodCell> back = cells_from_json(json_text);
  REQUIRE(back.size() == result.cells.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].method == result.cells[i].method);
    CHECK(back[i].q == result.cells[i].q);
    CHECK(back[i].ct_mean == result.cells[i].ct_mean);
    CHECK(back[i].mse_mean == result.cells[i].mse_mean);
    CHECK(back[i].records.size() == result.cells[i].records.size());
    for (std::size_t r = 0; r < back[i].records.size(); ++r) {
      CHECK(back[i].records[r].mse == result.cells[i].records[r].mse);
      CHECK(back[i].records[r].converged == result.cells[i].records[r].converged);
    }
  }

  emit_tables(result, "both");
  CHECK(std::filesystem::exists("/tmp/ddcmix_harness_test/study.csv"));
  CHECK(std::filesystem::exists("/tmp/ddcmix_harness_test/study.json"));
}

TEST_CASE("study statistics are invariant to the worker count") {
  StudyConfig config = parse_study_config(small_mixture_config(3));
  config.workers = 1;
  StudyResult serial = run_study(config);
  config.workers = 3;
  StudyResult parallel = run_study(config);
  REQUIRE(serial.cells.size() == parallel.cells.size());
  for (std::size_t i = 0; i < serial.cells.size(); ++i) {
    CHECK(serial.cells[i].mse_mean == doctest::Approx(parallel.cells[i].mse_mean).epsilon(1e-12));
    CHECK(serial.cells[i].avg_iter == parallel.cells[i].avg_iter);
    CHECK(serial.cells[i].conv_pct == parallel.cells[i].conv_pct);
    for (std::size_t r = 0; r < serial.cells[i].records.size(); ++r)
      CHECK(serial.cells[i].records[r].mse == parallel.cells[i].records[r].mse);
  }
}

TEST_CASE("replication seeds derive purely from the master seed and index") {
  CHECK(derive_seed(10, 3) == derive_seed(10, 3));
  CHECK(derive_seed(10, 3) != derive_seed(10, 4));
  CHECK(derive_seed(11, 3) != derive_seed(10, 3));
}

TEST_CASE("simulated panels round-trip through estimate_once") {
  StudyConfig config = parse_study_config(small_mixture_config());
  MixtureDDCModel model = build_model(config);
  CCPProfile pol = solve_all_types(model);
  SimulatedPanel sim = simulate_panel(model, pol, model.type_weights(), 200, 8,
                                      derive_seed(config.seed, 0), 0);
  const std::string path = "/tmp/ddcmix_roundtrip_panel.csv";
  sim.panel.save_csv(path);
  PanelData loaded = PanelData::load_csv(path);

  EstimateOnceResult r = estimate_once(config, loaded);
  CHECK(r.estimation.outer.converged);
  CHECK(r.covariance.has_value());
  const std::string report = estimate_report_json(config, model, r);
  CHECK(report.find("log_pseudo_likelihood") != std::string::npos);

  // A single-type fit on mixture data is legal (misspecification allowed).
  StudyConfig single = config;
  single.entry_exit.type_params = {config.entry_exit.type_params[0]};
  single.entry_exit.type_weights = Eigen::VectorXd::Ones(1);
  MixtureDDCModel m1 = build_model(single);
  (void)m1;
  EstimateOnceResult r1 = estimate_once(single, loaded);
  CHECK(r1.estimation.outer.converged);
}

TEST_CASE("bench-inner reports one row per candidate solver") {
  StudyConfig config = parse_study_config(small_mixture_config());
  std::vector<BenchRow> rows = bench_inner(config);
  REQUIRE(rows.size() >= 5);  // PV x 2, BM x 3, EE
  bool has_ee = false;
  for (const auto& r : rows) {
    CHECK(r.converged);
    CHECK(r.iterations >= 1);
    if (r.label == "EE:SA") has_ee = true;
  }
  CHECK(has_ee);
  CHECK(!bench_to_json(rows).empty());
}

TEST_CASE("emit_tables refuses empty cell lists and bad formats") {
  StudyResult empty;
  empty.config = parse_study_config(small_mixture_config());
  CHECK_THROWS_AS(emit_tables(empty, "csv"), ConfigError);
  StudyResult one;
  one.config = empty.config;
  one.cells.push_back(MethodCell{});
  CHECK_THROWS_AS(emit_tables(one, "yaml"), ConfigError);
}
