#include "ddcmix/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ddcmix/bellman.hpp"
#include "ddcmix/epl.hpp"
#include "ddcmix/euler.hpp"
#include "ddcmix/logit.hpp"
#include "ddcmix/policy_valuation.hpp"
#include "ddcmix/rng.hpp"

namespace ddcmix {

namespace {
using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int parse_q(const json& v) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "Inf" || s == "INF") return kInfIters;
    throw ConfigError("q entries must be integers or \"inf\"");
  }
  const int q = v.get<int>();
  if (q == kInfIters) return kInfIters;
  if (q < 1) throw ConfigError("q entries must be >= 1 or \"inf\"");
  return q;
}

bool is_game(const StudyConfig& c) { return c.design == "entry_game"; }

}  // namespace

void StudyConfig::validate() const {
  if (design != "entry_exit_FD" && design != "entry_exit_NFD" && design != "entry_game")
    throw ConfigError("unknown design: " + design);
  if (methods.empty()) throw ConfigError("method list is empty");
  if (q_values.empty()) throw ConfigError("q list is empty");
  if (replications < 1) throw ConfigError("replications must be >= 1");
  if (n_starts < 1) throw ConfigError("n_starts must be >= 1");
  for (Method m : methods) {
    if (m == Method::EE_SA && design != "entry_exit_FD")
      throw ConfigError("EE_SA is available in the finite-dependence single-agent design only");
    if ((m == Method::EPL_GMRES || m == Method::PV_EPL_GMRES) && !is_game(*this))
      throw ConfigError(to_string(m) + " is implemented for the game design only");
  }
  if (ccp_update != "auto" && ccp_update != "plain" && ccp_update != "spectral")
    throw ConfigError("ccp_update must be auto, plain, or spectral");
  if (init_kind != "auto" && init_kind != "frequency" && init_kind != "sieve")
    throw ConfigError("init kind must be auto, frequency, or sieve");
}

StudyConfig parse_study_config(const std::string& json_text) {
  json j = json::parse(json_text);
  StudyConfig c;
  c.design = j.value("design", c.design);
  if (j.contains("entry_exit")) {
    const json& e = j["entry_exit"];
    c.entry_exit.beta = e.value("beta", c.entry_exit.beta);
    c.entry_exit.grid_points = e.value("grid_points", c.entry_exit.grid_points);
    c.entry_exit.span_sigmas = e.value("span_sigmas", c.entry_exit.span_sigmas);
    c.entry_exit.markets = e.value("markets", c.entry_exit.markets);
    c.entry_exit.periods = e.value("periods", c.entry_exit.periods);
    c.entry_exit.burn_in = e.value("burn_in", c.entry_exit.burn_in);
    if (e.contains("theta")) {
      c.entry_exit.type_params.clear();
      for (const auto& row : e["theta"]) {
        Eigen::VectorXd t(row.size());
        for (std::size_t i = 0; i < row.size(); ++i) t(i) = row[i].get<double>();
        c.entry_exit.type_params.push_back(std::move(t));
      }
    }
    if (e.contains("pi")) {
      const auto& p = e["pi"];
      c.entry_exit.type_weights.resize(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) c.entry_exit.type_weights(i) = p[i].get<double>();
    }
  }
  c.entry_exit.finite_dependence = c.design != "entry_exit_NFD";
  if (j.contains("entry_game")) {
    const json& e = j["entry_game"];
    const int firms = e.value("firms", c.entry_game.firms);
    c.entry_game = EntryGameSpec::defaults(firms);
    c.entry_game.theta_rs = e.value("theta_rs", c.entry_game.theta_rs);
    c.entry_game.theta_rc = e.value("theta_rc", c.entry_game.theta_rc);
    c.entry_game.theta_ec = e.value("theta_ec", c.entry_game.theta_ec);
    c.entry_game.beta = e.value("beta", c.entry_game.beta);
    c.entry_game.markets = e.value("markets", c.entry_game.markets);
    c.entry_game.periods = e.value("periods", c.entry_game.periods);
    c.entry_game.burn_in = e.value("burn_in", c.entry_game.burn_in);
    if (e.contains("theta_fc")) {
      const auto& f = e["theta_fc"];
      c.entry_game.theta_fc.resize(f.size());
      for (std::size_t i = 0; i < f.size(); ++i) c.entry_game.theta_fc(i) = f[i].get<double>();
    }
  }
  if (j.contains("methods"))
    for (const auto& s : j["methods"]) c.methods.push_back(method_from_string(s.get<std::string>()));
  if (j.contains("q"))
    for (const auto& v : j["q"]) c.q_values.push_back(parse_q(v));
  c.replications = j.value("replications", c.replications);
  c.seed = j.value("seed", c.seed);
  c.eps_outer = j.value("epsilon_outer", c.eps_outer);
  c.inner_tol = j.value("inner_tol", c.inner_tol);
  c.max_outer = j.value("max_outer", c.max_outer);
  c.ccp_update = j.value("ccp_update", c.ccp_update);
  c.n_starts = j.value("n_starts", c.n_starts);
  c.mse_include_nonconverged = j.value("mse_include_nonconverged", c.mse_include_nonconverged);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.workers = j.value("workers", c.workers);
  if (j.contains("init")) {
    const json& e = j["init"];
    c.init_kind = e.value("kind", c.init_kind);
    c.init.degree = e.value("degree", c.init.degree);
    c.init.num_types = e.value("num_types", c.init.num_types);
    c.init.kmeans_restarts = e.value("kmeans_restarts", c.init.kmeans_restarts);
    c.init.em_tol = e.value("em_tol", c.init.em_tol);
    c.init.em_max_iters = e.value("em_max_iters", c.init.em_max_iters);
    c.init.random_init = e.value("random", c.init.random_init);
    c.init.random_scale = e.value("random_scale", c.init.random_scale);
  }
  c.validate();
  return c;
}

StudyConfig load_study_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_study_config(ss.str());
}

MixtureDDCModel build_model(const StudyConfig& config) {
  if (is_game(config)) return build_entry_game_model(config.entry_game);
  EntryExitSpec spec = config.entry_exit;
  spec.finite_dependence = config.design != "entry_exit_NFD";
  return build_entry_exit_model(spec);
}

EstimatorOptions estimator_options(const StudyConfig& config, Method method, int q) {
  EstimatorOptions opt;
  opt.method = method;
  opt.q = q;
  opt.eps_outer = config.eps_outer;
  opt.inner_tol = config.inner_tol;
  opt.max_outer = config.max_outer;
  if (config.ccp_update == "plain")
    opt.ccp_mode = CcpUpdateMode::Plain;
  else if (config.ccp_update == "spectral")
    opt.ccp_mode = CcpUpdateMode::Spectral;
  else
    opt.ccp_mode = is_game(config) ? CcpUpdateMode::Spectral : CcpUpdateMode::Plain;
  if (method == Method::EPL_GMRES || method == Method::PV_EPL_GMRES)
    opt.ccp_mode = CcpUpdateMode::Plain;  // EPL tracks P = logit(v) exactly
  return opt;
}

EstimationInit make_study_init(const StudyConfig& config, const MixtureDDCModel& model,
                               const PanelData& panel, std::uint64_t seed) {
  EstimationInit init;
  const bool sieve = config.init_kind == "sieve" ||
                     (config.init_kind == "auto" && model.num_firms() == 1 && model.num_types() > 1);
  if (sieve) {
    SieveInitConfig sc = config.init;
    if (sc.num_types <= 0) sc.num_types = model.num_types();
    SieveInit si = sieve_logit_init(panel, model, sc, seed);
    init.p0 = si.ccps;
    init.pi0 = si.pi;
  } else {
    init.p0 = frequency_ccp(panel, model);
    init.pi0 = Eigen::VectorXd::Constant(model.num_types(), 1.0 / model.num_types());
  }
  return init;
}

int resolve_workers(const StudyConfig& config) {
  if (config.workers > 0) return config.workers;
  if (const char* env = std::getenv("DDCMIX_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) return w;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

StudyResult run_study(const StudyConfig& config) {
  config.validate();
  MixtureDDCModel model = build_model(config);
  const CCPProfile policies = solve_all_types(model);
  const int markets = is_game(config) ? config.entry_game.markets : config.entry_exit.markets;
  const int periods = is_game(config) ? config.entry_game.periods : config.entry_exit.periods;
  const int burn_in = is_game(config) ? config.entry_game.burn_in : config.entry_exit.burn_in;

  std::vector<Eigen::VectorXd> theta_star;
  for (int m = 0; m < model.num_types(); ++m) theta_star.push_back(model.type_params(m));
  const Eigen::VectorXd pi_star = model.type_weights();

  struct Cell {
    Method method;
    int q;
  };
  std::vector<Cell> grid;
  for (Method m : config.methods)
    for (int q : config.q_values) grid.push_back({m, q});

  std::vector<std::vector<ReplicationRecord>> records(
      grid.size(), std::vector<ReplicationRecord>(config.replications));

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= config.replications) return;
      const std::uint64_t rep_seed = derive_seed(config.seed, static_cast<std::uint64_t>(r));
      SimulatedPanel sim =
          simulate_panel(model, policies, pi_star, markets, periods, rep_seed, burn_in);
      EstimationInit shared_init;
      bool init_ok = true;
      try {
        shared_init = make_study_init(config, model, sim.panel, rep_seed);
      } catch (const std::exception&) {
        init_ok = false;
      }
      for (std::size_t g = 0; g < grid.size(); ++g) {
        ReplicationRecord rec;
        rec.replication = r;
        if (!init_ok) {
          records[g][r] = rec;
          continue;
        }
        const EstimatorOptions opt = estimator_options(config, grid[g].method, grid[g].q);
        try {
          const auto t0 = Clock::now();
          EstimationResult est;
          if (config.n_starts == 1) {
            est = em_npl_q_run(model, sim.panel, shared_init, opt);
          } else {
            MultiStartResult ms = multi_start(
                model, sim.panel, opt,
                [&](int s, std::uint64_t sseed) {
                  if (s == 0) return shared_init;
                  StudyConfig c2 = config;
                  c2.init.random_init = true;
                  return make_study_init(c2, model, sim.panel, sseed);
                },
                config.n_starts, rep_seed);
            est = std::move(ms.best);
          }
          rec.seconds = seconds_since(t0);
          rec.converged = est.outer.converged;
          rec.outer_iterations = est.outer.iterations_used;
          rec.log_pl = est.state.log_pseudo_likelihood;
          rec.mse = match_labels(est.state.theta, est.state.pi, theta_star, pi_star).mse;
        } catch (const std::exception&) {
          rec.converged = false;  // recorded, never aborts the study
        }
        records[g][r] = rec;
      }
    }
  };

  const int nworkers = std::min(resolve_workers(config), config.replications);
  std::vector<std::thread> pool;
  for (int w = 0; w < nworkers - 1; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  StudyResult out;
  out.config = config;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    MethodCell cell;
    cell.method = grid[g].method;
    cell.q = grid[g].q;
    cell.records = records[g];
    double ct_sum = 0.0, ct_sq = 0.0, mse_sum = 0.0, iter_sum = 0.0;
    int conv = 0, mse_n = 0;
    for (const auto& rec : cell.records) {
      ct_sum += rec.seconds;
      ct_sq += rec.seconds * rec.seconds;
      iter_sum += rec.outer_iterations;
      if (rec.converged) ++conv;
      if (rec.converged || config.mse_include_nonconverged) {
        mse_sum += rec.mse;
        ++mse_n;
      }
    }
    const int rtot = config.replications;
    cell.ct_mean = ct_sum / rtot;
    cell.ct_sd = rtot > 1 ? std::sqrt(std::max(0.0, (ct_sq - rtot * cell.ct_mean * cell.ct_mean) /
                                                        (rtot - 1)))
                          : 0.0;
    cell.mse_mean = mse_n > 0 ? mse_sum / mse_n : std::numeric_limits<double>::quiet_NaN();
    cell.avg_iter = iter_sum / rtot;
    cell.conv_pct = 100.0 * conv / rtot;
    out.cells.push_back(std::move(cell));
  }
  return out;
}

namespace {
std::string q_label(int q) { return q == kInfIters ? "inf" : std::to_string(q); }
}  // namespace

std::string cells_to_csv(const std::vector<MethodCell>& cells) {
  std::ostringstream out;
  out << "method,q,ct_mean,ct_sd,mse,avg_iter,conv_pct\n";
  out.precision(10);
  for (const auto& c : cells)
    out << to_string(c.method) << ',' << q_label(c.q) << ',' << c.ct_mean << ',' << c.ct_sd << ','
        << c.mse_mean << ',' << c.avg_iter << ',' << c.conv_pct << '\n';
  return out.str();
}

std::string study_to_json(const StudyResult& result) {
  json j;
  j["design"] = result.config.design;
  j["replications"] = result.config.replications;
  j["seed"] = result.config.seed;
  j["cells"] = json::array();
  for (const auto& c : result.cells) {
    json cell;
    cell["method"] = to_string(c.method);
    cell["q"] = c.q == kInfIters ? json("inf") : json(c.q);
    cell["ct_mean"] = c.ct_mean;
    cell["ct_sd"] = c.ct_sd;
    cell["mse"] = c.mse_mean;
    cell["avg_iter"] = c.avg_iter;
    cell["conv_pct"] = c.conv_pct;
    cell["records"] = json::array();
    for (const auto& r : c.records) {
      cell["records"].push_back({{"replication", r.replication},
                                 {"converged", r.converged},
                                 {"seconds", r.seconds},
                                 {"outer_iterations", r.outer_iterations},
                                 {"mse", r.mse},
                                 {"log_pl", r.log_pl}});
    }
    j["cells"].push_back(std::move(cell));
  }
  return j.dump(2);
}

std::vector<MethodCell> cells_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  std::vector<MethodCell> out;
  for (const auto& cell : j.at("cells")) {
    MethodCell c;
    c.method = method_from_string(cell.at("method").get<std::string>());
    c.q = cell.at("q").is_string() ? kInfIters : cell.at("q").get<int>();
    c.ct_mean = cell.at("ct_mean").get<double>();
    c.ct_sd = cell.at("ct_sd").get<double>();
    c.mse_mean = cell.at("mse").get<double>();
    c.avg_iter = cell.at("avg_iter").get<double>();
    c.conv_pct = cell.at("conv_pct").get<double>();
    for (const auto& r : cell.at("records")) {
      ReplicationRecord rec;
      rec.replication = r.at("replication").get<int>();
      rec.converged = r.at("converged").get<bool>();
      rec.seconds = r.at("seconds").get<double>();
      rec.outer_iterations = r.at("outer_iterations").get<int>();
      rec.mse = r.at("mse").get<double>();
      rec.log_pl = r.at("log_pl").get<double>();
      c.records.push_back(rec);
    }
    out.push_back(std::move(c));
  }
  return out;
}

void emit_tables(const StudyResult& result, const std::string& format) {
  if (result.cells.empty()) throw ConfigError("emit_tables: no cells to write");
  if (format != "csv" && format != "json" && format != "both")
    throw ConfigError("emit_tables: format must be csv, json, or both");
  std::filesystem::create_directories(result.config.output_dir);
  const auto write = [&](const std::string& name, const std::string& text) {
    const std::string path = result.config.output_dir + "/" + name;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("emit_tables: cannot write " + path);
    out << text;
  };
  if (format == "csv" || format == "both") write("study.csv", cells_to_csv(result.cells));
  if (format == "json" || format == "both") write("study.json", study_to_json(result));
}

EstimateOnceResult estimate_once(const StudyConfig& config, const PanelData& panel) {
  config.validate();
  MixtureDDCModel model = build_model(config);
  panel.validate(model.num_states(), model.num_actions());

  EstimateOnceResult out;
  out.method = config.methods.front();
  out.q = config.q_values.front();
  out.n_starts = config.n_starts;
  const EstimatorOptions opt = estimator_options(config, out.method, out.q);

  const auto t0 = Clock::now();
  MultiStartResult ms = multi_start(
      model, panel, opt,
      [&](int s, std::uint64_t sseed) {
        if (s == 0) return make_study_init(config, model, panel, sseed);
        StudyConfig c2 = config;
        c2.init.random_init = true;
        return make_study_init(c2, model, panel, sseed);
      },
      config.n_starts, config.seed);
  out.estimation = std::move(ms.best);
  out.seconds = seconds_since(t0);
  if (out.estimation.affine_values && out.estimation.outer.converged)
    out.covariance = standard_errors_linear(model, panel, out.estimation);
  return out;
}

std::string estimate_report_json(const StudyConfig& config, const MixtureDDCModel& model,
                                 const EstimateOnceResult& result) {
  json j;
  j["design"] = config.design;
  j["method"] = to_string(result.method);
  j["q"] = result.q == kInfIters ? json("inf") : json(result.q);
  j["n_starts"] = result.n_starts;
  j["converged"] = result.estimation.outer.converged;
  j["outer_iterations"] = result.estimation.outer.iterations_used;
  j["log_pseudo_likelihood"] = result.estimation.state.log_pseudo_likelihood;
  j["seconds"] = result.seconds;
  j["pi"] = std::vector<double>(result.estimation.state.pi.data(),
                                result.estimation.state.pi.data() + result.estimation.state.pi.size());
  j["theta"] = json::array();
  for (const auto& t : result.estimation.state.theta)
    j["theta"].push_back(std::vector<double>(t.data(), t.data() + t.size()));
  if (result.covariance) {
    const int d = model.num_params();
    const int m = model.num_types();
    json se_theta = json::array();
    for (int type = 0; type < m; ++type) {
      std::vector<double> se(d);
      for (int k = 0; k < d; ++k) se[k] = result.covariance->std_errors(type * d + k);
      se_theta.push_back(se);
    }
    j["std_errors"]["theta"] = se_theta;
    std::vector<double> se_pi;
    for (int f = 0; f < m - 1; ++f) se_pi.push_back(result.covariance->std_errors(m * d + f));
    j["std_errors"]["pi_free"] = se_pi;
  }
  j["trace"] = json::array();
  for (const auto& rec : result.estimation.trace)
    j["trace"].push_back({{"dp", rec.dp},
                          {"dtheta", rec.dtheta},
                          {"dv_rel", rec.dv_rel},
                          {"dpi", rec.dpi},
                          {"log_pl", rec.log_pl},
                          {"seconds", rec.seconds}});
  return j.dump(2);
}

std::vector<BenchRow> bench_inner(const StudyConfig& config) {
  MixtureDDCModel model = build_model(config);
  const CCPProfile policies = solve_all_types(model);
  const int markets = is_game(config) ? config.entry_game.markets : config.entry_exit.markets;
  const int periods = is_game(config) ? config.entry_game.periods : config.entry_exit.periods;
  const int burn_in = is_game(config) ? config.entry_game.burn_in : config.entry_exit.burn_in;
  SimulatedPanel sim = simulate_panel(model, policies, model.type_weights(), markets, periods,
                                      config.seed, burn_in);
  const CCPProfile p0 = frequency_ccp(sim.panel, model);
  const int nx = model.num_states();
  const int d = model.num_params();

  // Pooled static-logit parameters give the nonlinear problems a theta.
  Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(d);
  {
    auto rx = std::make_shared<const RivalExpectation>(model, 0, 0, p0);
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(nx, model.num_actions());
    for (int i = 0; i < sim.panel.num_markets; ++i)
      for (int t = 0; t < sim.panel.num_periods; ++t)
        counts(sim.panel.states(i, t), sim.panel.actions[0](i, t)) += 1.0;
    std::vector<int> visited;
    for (int x = 0; x < nx; ++x)
      if (counts.row(x).sum() > 0) visited.push_back(x);
    Eigen::MatrixXd cvis(visited.size(), model.num_actions());
    for (std::size_t s = 0; s < visited.size(); ++s) cvis.row(s) = counts.row(visited[s]);
    MStepObjective obj;
    obj.dim = d;
    obj.eval = [&](const Eigen::VectorXd& theta, double* value, Eigen::VectorXd* grad,
                   Eigen::MatrixXd* hess) {
      // Static logit on expected flow utilities.
      const Eigen::VectorXd flow = rx->phi_bar() * theta;
      Eigen::MatrixXd u(nx, model.num_actions());
      for (int x = 0; x < nx; ++x)
        for (int a = 0; a < model.num_actions(); ++a)
          u(x, a) = flow(static_cast<Eigen::Index>(x) * model.num_actions() + a);
      double v = 0.0;
      Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
      Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
      double total = 0.0;
      for (std::size_t s = 0; s < visited.size(); ++s) {
        const int x = visited[s];
        const double n_x = cvis.row(s).sum();
        total += n_x;
        Eigen::VectorXd p = logit_ccp(u.row(x).transpose());
        Eigen::RowVectorXd zbar = Eigen::RowVectorXd::Zero(d);
        for (int a = 0; a < model.num_actions(); ++a)
          zbar += p(a) * rx->phi_bar().row(static_cast<Eigen::Index>(x) * model.num_actions() + a);
        Eigen::MatrixXd second = Eigen::MatrixXd::Zero(d, d);
        for (int a = 0; a < model.num_actions(); ++a) {
          const Eigen::RowVectorXd z =
              rx->phi_bar().row(static_cast<Eigen::Index>(x) * model.num_actions() + a);
          v += cvis(s, a) * std::log(std::max(p(a), kCcpFloor));
          g += cvis(s, a) * z.transpose();
          second.noalias() += p(a) * z.transpose() * z;
        }
        g -= n_x * zbar.transpose();
        second.noalias() -= zbar.transpose() * zbar;
        h -= n_x * second;
      }
      if (value) *value = v / total;
      if (grad) *grad = g / total;
      if (hess) *hess = h / total;
    };
    theta0 = m_step(obj, Eigen::VectorXd::Zero(d), 1e-6, 200).theta;
  }

  std::vector<BenchRow> rows;
  auto time_gamma = [&](const std::string& label, FixedPointProblem prob, InnerAlgorithm alg,
                        Eigen::Index cols) {
    GammaSolver gamma = make_gamma(prob, alg, kInfIters, config.inner_tol);
    Eigen::MatrixXd warm = Eigen::MatrixXd::Zero(prob.dim(), cols);
    const auto t0 = Clock::now();
    auto [y, rep] = gamma(warm);
    (void)y;
    rows.push_back({label, seconds_since(t0), rep.iterations_used, rep.final_residual_norm,
                    rep.converged});
  };

  // Policy-valuation W systems for (type 0, firm 0) at the initial CCPs.
  {
    auto rx = std::make_shared<const RivalExpectation>(model, 0, 0, p0);
    FixedPointProblem prob;
    prob.kind = FixedPointProblem::Kind::WComponents;
    prob.theta_separable = true;
    prob.linear = w_components_system(model, rx, p0.at(0, 0));
    time_gamma("PV:GMRES", prob, InnerAlgorithm::GMRES, d + 1);
    time_gamma("PV:SA", prob, InnerAlgorithm::SA, d + 1);
  }
  // Bellman problems at theta0.
  {
    auto rx = std::make_shared<const RivalExpectation>(model, 0, 0, p0);
    FixedPointProblem prob;
    prob.kind = FixedPointProblem::Kind::Bellman;
    prob.nonlinear = NonlinearSystem{
        nx,
        [&model, rx, theta0](const Eigen::Ref<const Eigen::VectorXd>& v) {
          return bellman_apply(model, *rx, theta0, v);
        },
        [&model, rx, theta0](const Eigen::Ref<const Eigen::VectorXd>& v) {
          return bellman_jacobian(model, rx, theta0, v);
        }};
    time_gamma("BM:SA", prob, InnerAlgorithm::SA, 1);
    time_gamma("BM:Anderson", prob, InnerAlgorithm::Anderson, 1);
    time_gamma("BM:Newton", prob, InnerAlgorithm::Newton, 1);
  }
  if (model.num_firms() == 1 && config.design == "entry_exit_FD") {
    auto euler = std::make_shared<EulerProblem>(model);
    const Eigen::Index dim = static_cast<Eigen::Index>(nx) * model.num_actions();
    FixedPointProblem prob;
    prob.kind = FixedPointProblem::Kind::Euler;
    prob.nonlinear = NonlinearSystem{
        dim,
        [euler, theta0, nx, na = model.num_actions()](const Eigen::Ref<const Eigen::VectorXd>& v) {
          Eigen::MatrixXd vm(nx, na);
          for (int x = 0; x < nx; ++x)
            for (int a = 0; a < na; ++a) vm(x, a) = v(static_cast<Eigen::Index>(x) * na + a);
          Eigen::MatrixXd out = euler->apply(theta0, vm);
          Eigen::VectorXd flat(static_cast<Eigen::Index>(nx) * na);
          for (int x = 0; x < nx; ++x)
            for (int a = 0; a < na; ++a) flat(static_cast<Eigen::Index>(x) * na + a) = out(x, a);
          return flat;
        },
        nullptr};
    time_gamma("EE:SA", prob, InnerAlgorithm::SA, 1);
  }
  if (model.num_firms() > 1) {
    std::vector<Eigen::MatrixXd> vt = equilibrium_conditional_values(model, 0, p0, 1e-8);
    EplProblem epl(model, 0, theta0, vt);
    FixedPointProblem prob;
    prob.kind = FixedPointProblem::Kind::Epl;
    prob.theta_separable = true;
    prob.linear = epl.stacked_system();
    time_gamma("EPL:GMRES", prob, InnerAlgorithm::GMRES, d + 1);
  }
  return rows;
}

std::string bench_to_json(const std::vector<BenchRow>& rows) {
  json j = json::array();
  for (const auto& r : rows)
    j.push_back({{"label", r.label},
                 {"seconds", r.seconds},
                 {"iterations", r.iterations},
                 {"residual", r.residual},
                 {"converged", r.converged}});
  return j.dump(2);
}

}  // namespace ddcmix
