#include "commands.hpp"

#include "run_config.hpp"

#include "hybridsize/mpc.hpp"
#include "hybridsize/neural.hpp"
#include "hybridsize/parallel.hpp"
#include "hybridsize/policy.hpp"
#include "hybridsize/sizing.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

namespace hybridsize::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Seed streams, one per stage.
constexpr std::uint64_t kScenarioStream = 1;
constexpr std::uint64_t kPoolStream = 2;
constexpr std::uint64_t kSampleStream = 3;
constexpr std::uint64_t kTrainStream = 4;
constexpr std::uint64_t kSweepStream = 5;
constexpr std::uint64_t kGridStream = 6;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Context {
  RunConfig cfg;
  fs::path out_dir;
  int threads = 1;
  std::ostream& log;

  [[nodiscard]] fs::path file(const std::string& name) const {
    const fs::path p(name);
    return p.is_absolute() ? p : out_dir / p;
  }
  [[nodiscard]] fs::path input(const std::string& name) const {
    auto p = file(name);
    if (!fs::exists(p)) throw InputError("missing input " + p.string());
    return p;
  }
  [[nodiscard]] std::uint64_t seed(std::uint64_t stream) const {
    return scenarios::derive_seed(cfg.seed, stream);
  }
};

class Stopwatch {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  return out;
}

void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_resolved(const Context& ctx, const std::string& stage) {
  write_json(ctx.file(stage + ".config.json"), {{"stage", stage}, {"config", to_json(ctx.cfg)}});
}

std::vector<scenarios::Scenario> load_pool(const Context& ctx) {
  auto pool = read_scenarios(ctx.input(ctx.cfg.paths.scenarios));
  if (pool.empty()) throw InputError("scenario file holds no scenarios");
  return pool;
}

neural::PolicyModel load_model(const Context& ctx) {
  auto model = neural::load_weights(ctx.input(ctx.cfg.paths.weights));
  if (model.net.architecture().horizon != ctx.cfg.system.horizon_steps) {
    throw InputError("weights were trained for horizon " +
                     std::to_string(model.net.architecture().horizon) + ", config uses " +
                     std::to_string(ctx.cfg.system.horizon_steps));
  }
  return model;
}

// ---------------------------------------------------------------------------

void gen_data(const Context& ctx) {
  const auto& sc = ctx.cfg.scenarios;
  std::vector<scenarios::Scenario> pool;
  if (sc.wind_csv.empty()) {
    const auto base = ctx.seed(kScenarioStream);
    for (int i = 0; i < sc.count; ++i) {
      pool.push_back(scenarios::synth_scenario(scenarios::derive_seed(base, static_cast<std::uint64_t>(i)),
                                               sc.steps, sc.wind, sc.load));
    }
  } else {
    auto wind = scenarios::load_timeseries_csv(sc.wind_csv, sc.wind_column);
    auto load = scenarios::load_timeseries_csv(sc.load_csv, sc.load_column);
    if (sc.source_dt_hours > 0.0 && sc.source_dt_hours != ctx.cfg.system.dt_hours) {
      wind = scenarios::resample(wind, sc.source_dt_hours, ctx.cfg.system.dt_hours);
      load = scenarios::resample(load, sc.source_dt_hours, ctx.cfg.system.dt_hours);
    }
    const std::size_t n = std::min(wind.size(), load.size());
    const std::size_t chunks = std::min<std::size_t>(static_cast<std::size_t>(sc.count), n / sc.steps);
    if (chunks == 0) throw InputError("measured series are shorter than one scenario");
    for (std::size_t i = 0; i < chunks; ++i) {
      const auto a = static_cast<std::ptrdiff_t>(i * sc.steps);
      const auto b = a + static_cast<std::ptrdiff_t>(sc.steps);
      pool.push_back({{wind.begin() + a, wind.begin() + b}, {load.begin() + a, load.begin() + b}});
    }
  }
  write_scenarios(ctx.file(ctx.cfg.paths.scenarios), pool);
  ctx.log << "wrote " << pool.size() << " scenarios of " << pool.front().wind_ms.size()
          << " steps\n";
}

void mpc_rollout(const Context& ctx, int index) {
  const auto pool = load_pool(ctx);
  if (index < 0 || static_cast<std::size_t>(index) >= pool.size()) {
    throw InputError("scenario index " + std::to_string(index) + " out of range");
  }
  const auto& sys = ctx.cfg.system;
  const auto& sc = pool[static_cast<std::size_t>(index)];
  const auto rps = scenarios::wind_to_power(sc.wind_ms, sys.rps_capacity_mw, ctx.cfg.scenarios.curve);
  Stopwatch clock;
  const auto traj = mpc::rollout(mpc::make_mpc_policy(sys), rps, sc.load_mw, sys,
                                 mpc::default_initial_state(sys));
  const double seconds = clock.seconds();

  auto csv = open_out(ctx.file("trajectory.csv"));
  csv << "step,rps_mw,load_mw,ess_energy_mwh,dtg_mw,ess_mw,curtail_mw\n";
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const auto& s = traj.steps[t];
    csv << t << ',' << s.rps_mw << ',' << s.load_mw << ',' << s.state.ess_energy_mwh << ','
        << s.action.dtg_mw << ',' << s.action.ess_mw << ',' << s.action.curtail_mw << '\n';
  }
  const double g = average_dtg_usage(traj);
  write_json(ctx.file("rollout.json"), {{"scenario", index},
                                        {"steps", traj.steps.size()},
                                        {"ess_capacity_mwh", sys.ess_capacity_mwh},
                                        {"rps_capacity_mw", sys.rps_capacity_mw},
                                        {"g_mw", g},
                                        {"final_energy_mwh", traj.final_state.ess_energy_mwh}});
  write_json(ctx.file("rollout_timing.json"),
             {{"seconds", seconds}, {"seconds_per_step", seconds / static_cast<double>(traj.steps.size())}});
  ctx.log << "scenario " << index << ": G = " << g << " MW over " << traj.steps.size()
          << " steps (" << seconds << " s)\n";
}

void sample_dataset(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  neural::SamplingConfig sc;
  sc.global = cfg.system;
  sc.scaling = neural::scaling_for(cfg.system, cfg.dataset.nominal_load_mw);
  sc.curve = cfg.scenarios.curve;
  sc.prob_prev_off = cfg.dataset.prob_prev_off;
  auto series = scenarios::synth_scenario(ctx.seed(kPoolStream), cfg.dataset.pool_steps,
                                          cfg.scenarios.wind, cfg.scenarios.load);
  const neural::DataPools pools{std::move(series.wind_ms), std::move(series.load_mw)};
  const std::size_t n = cfg.dataset.samples;
  const std::size_t tick = std::max<std::size_t>(1, n / 10);
  Stopwatch clock;
  const auto data = neural::sample_dataset(n, ctx.seed(kSampleStream), pools, sc, ctx.threads,
                                           [&](std::size_t done) {
                                             if (done % tick == 0) {
                                               ctx.log << "sampled " << done << "/" << n << "\n";
                                             }
                                           });
  const double seconds = clock.seconds();
  neural::save_dataset(data, ctx.file(cfg.paths.dataset));
  write_json(ctx.file("dataset.json"), {{"samples", data.size()}, {"failures", data.failures}});
  write_json(ctx.file("dataset_timing.json"),
             {{"seconds", seconds}, {"seconds_per_sample", seconds / static_cast<double>(n)}});
}

void train(const Context& ctx) {
  const auto data = neural::load_dataset(ctx.input(ctx.cfg.paths.dataset));
  if (data.horizon != ctx.cfg.system.horizon_steps) {
    throw InputError("dataset horizon " + std::to_string(data.horizon) +
                     " does not match the config");
  }
  auto tc = ctx.cfg.train;
  tc.seed = ctx.seed(kTrainStream);
  Stopwatch clock;
  const auto result = neural::train(data, ctx.cfg.network, tc, [&](const neural::EpochMetrics& m) {
    ctx.log << "epoch " << m.epoch << ": train " << m.train_loss << ", val " << m.val_loss
            << ", val MAE " << m.val_mae_mw << " MW\n";
  });
  const double seconds = clock.seconds();
  neural::save_weights(result.model, ctx.file(ctx.cfg.paths.weights));
  auto csv = open_out(ctx.file("metrics.csv"));
  csv << "epoch,train_loss,val_loss,val_mae_mw\n";
  json epochs = json::array();
  for (const auto& m : result.history) {
    csv << m.epoch << ',' << m.train_loss << ',' << m.val_loss << ',' << m.val_mae_mw << '\n';
    epochs.push_back(m.seconds);
  }
  const auto& last = result.history.back();
  write_json(ctx.file("train.json"),
             {{"epochs", result.history.size()},
              {"samples", data.size()},
              {"parameters", neural::parameter_count(ctx.cfg.network)},
              {"val_loss", last.val_loss},
              {"val_mae_mw", last.val_mae_mw}});
  write_json(ctx.file("train_timing.json"), {{"seconds", seconds}, {"epoch_seconds", epochs}});
}

struct Comparison {
  double g_mpc = 0.0, g_neural = 0.0;
  double dtg_mae = 0.0, ess_mae = 0.0;  // mean |neural - mpc| along the trajectories
  double mpc_seconds = 0.0, neural_seconds = 0.0;
};

void eval_policy(const Context& ctx) {
  const auto pool = load_pool(ctx);
  const auto model = load_model(ctx);
  const auto& sys = ctx.cfg.system;
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(ctx.cfg.eval.scenarios), pool.size());
  std::vector<Comparison> rows(count);
  parallel_for(count, ctx.threads, [&](std::size_t i) {
    const auto& sc = pool[i];
    const auto rps = scenarios::wind_to_power(sc.wind_ms, sys.rps_capacity_mw, ctx.cfg.scenarios.curve);
    const auto init = mpc::default_initial_state(sys);
    Stopwatch t_mpc;
    const auto a = mpc::rollout(mpc::make_mpc_policy(sys), rps, sc.load_mw, sys, init, ctx.cfg.eval.steps);
    rows[i].mpc_seconds = t_mpc.seconds();
    Stopwatch t_nn;
    const auto b = mpc::rollout(policy::make_neural_policy(model, sys), rps, sc.load_mw, sys, init,
                                ctx.cfg.eval.steps);
    rows[i].neural_seconds = t_nn.seconds();
    rows[i].g_mpc = average_dtg_usage(a);
    rows[i].g_neural = average_dtg_usage(b);
    for (std::size_t t = 0; t < a.steps.size(); ++t) {
      rows[i].dtg_mae += std::abs(a.steps[t].action.dtg_mw - b.steps[t].action.dtg_mw);
      rows[i].ess_mae += std::abs(a.steps[t].action.ess_mw - b.steps[t].action.ess_mw);
    }
    rows[i].dtg_mae /= static_cast<double>(a.steps.size());
    rows[i].ess_mae /= static_cast<double>(a.steps.size());
  });

  json per = json::array();
  double g_mpc = 0.0, g_nn = 0.0, s_mpc = 0.0, s_nn = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& r = rows[i];
    per.push_back({{"scenario", i},
                   {"g_mpc_mw", r.g_mpc},
                   {"g_neural_mw", r.g_neural},
                   {"dtg_mae_mw", r.dtg_mae},
                   {"ess_mae_mw", r.ess_mae}});
    g_mpc += r.g_mpc;
    g_nn += r.g_neural;
    s_mpc += r.mpc_seconds;
    s_nn += r.neural_seconds;
  }
  g_mpc /= static_cast<double>(count);
  g_nn /= static_cast<double>(count);
  const double rel = g_mpc > 0.0 ? std::abs(g_nn - g_mpc) / g_mpc : std::abs(g_nn - g_mpc);
  write_json(ctx.file("eval.json"), {{"scenarios", per},
                                     {"g_mpc_mw", g_mpc},
                                     {"g_neural_mw", g_nn},
                                     {"relative_difference", rel}});
  write_json(ctx.file("eval_timing.json"), {{"mpc_seconds", s_mpc},
                                            {"neural_seconds", s_nn},
                                            {"speedup", s_nn > 0.0 ? s_mpc / s_nn : 0.0}});
  ctx.log << "G: mpc " << g_mpc << " MW, neural " << g_nn << " MW (relative difference " << rel
          << "), speedup " << (s_nn > 0.0 ? s_mpc / s_nn : 0.0) << "x\n";
}

void alpha_sweep(const Context& ctx) {
  const auto pool = load_pool(ctx);
  const auto& cfg = ctx.cfg;
  const bool neural_base = cfg.sweep.base == "neural";
  neural::PolicyModel model;
  if (neural_base) model = load_model(ctx);
  sizing::EstimateOptions opt;
  opt.n_scenarios = cfg.sweep.scenarios;
  opt.seed = ctx.seed(kSweepStream);
  opt.threads = ctx.threads;
  opt.curve = cfg.scenarios.curve;
  const double e = cfg.system.ess_capacity_mwh, p = cfg.system.rps_capacity_mw;

  const auto det = sizing::estimate_G(
      e, p, neural_base ? sizing::neural_factory(model) : sizing::mpc_factory(), pool, cfg.system, opt);
  auto csv = open_out(ctx.file("alpha_sweep.csv"));
  csv << "alpha,g_mw,stderr_mw\n";
  json points = json::array();
  double best_alpha = 0.0, best_g = INFINITY;
  for (double alpha : cfg.sweep.alphas) {
    auto spc = cfg.stochastic;
    spc.alpha = alpha;
    const auto factory = neural_base ? sizing::stochastic_neural_factory(model, spc, opt.curve)
                                     : sizing::stochastic_mpc_factory(spc, opt.curve);
    const auto est = sizing::estimate_G(e, p, factory, pool, cfg.system, opt);
    csv << alpha << ',' << est.g_mw << ',' << est.stderr_mw << '\n';
    points.push_back({{"alpha", alpha}, {"g_mw", est.g_mw}, {"stderr_mw", est.stderr_mw}});
    if (est.g_mw < best_g) {
      best_g = est.g_mw;
      best_alpha = alpha;
    }
    ctx.log << "alpha " << alpha << ": G = " << est.g_mw << " +- " << est.stderr_mw << " MW\n";
  }
  write_json(ctx.file("alpha_sweep.json"),
             {{"base", cfg.sweep.base},
              {"deterministic", {{"g_mw", det.g_mw}, {"stderr_mw", det.stderr_mw}}},
              {"points", points},
              {"best_alpha", best_alpha}});
}

void size_grid(const Context& ctx) {
  const auto pool = load_pool(ctx);
  const auto& cfg = ctx.cfg;
  sizing::PolicyFactory factory;
  if (cfg.grid.policy == "mpc") {
    factory = sizing::mpc_factory();
  } else if (cfg.grid.policy == "neural") {
    factory = sizing::neural_factory(load_model(ctx));
  } else {
    factory = sizing::stochastic_neural_factory(load_model(ctx), cfg.stochastic, cfg.scenarios.curve);
  }
  const auto ess = cfg.grid.ess_axis.empty() ? sizing::default_ess_axis(cfg.system) : cfg.grid.ess_axis;
  const auto rps = cfg.grid.rps_axis.empty() ? sizing::default_rps_axis(cfg.system) : cfg.grid.rps_axis;
  sizing::EstimateOptions opt;
  opt.n_scenarios = cfg.grid.n_scenarios;
  opt.seed = ctx.seed(kGridStream);
  opt.threads = ctx.threads;
  opt.curve = cfg.scenarios.curve;
  Stopwatch clock;
  const auto grid = sizing::grid_search(ess, rps, factory, cfg.grid.policy, pool, cfg.system, opt);
  const double seconds = clock.seconds();
  sizing::write_grid_csv(ctx.file(cfg.paths.grid), grid);
  write_json(ctx.file("grid.json"), {{"policy", grid.policy_id},
                                     {"seed", grid.seed},
                                     {"n_scenarios", grid.n_scenarios},
                                     {"ess_axis", grid.ess_axis},
                                     {"rps_axis", grid.rps_axis}});
  write_json(ctx.file("grid_timing.json"), {{"seconds", seconds}});
  ctx.log << "grid " << ess.size() << "x" << rps.size() << " done (" << seconds << " s)\n";
}

void frontier(const Context& ctx) {
  const auto grid = sizing::read_grid_csv(ctx.input(ctx.cfg.paths.grid));
  const auto& f = ctx.cfg.frontier;
  std::vector<double> budgets;
  const auto steps = static_cast<std::size_t>(std::floor(f.budget_max / f.budget_step + 1e-9));
  for (std::size_t k = 0; k <= steps; ++k) budgets.push_back(static_cast<double>(k) * f.budget_step);
  const auto upc = sizing::usage_per_cost(grid, ctx.cfg.costs, budgets);
  sizing::write_budget_csv(ctx.file("usage_per_cost.csv"), upc);
  const auto path = sizing::optimal_frontier(grid, ctx.cfg.costs);
  sizing::write_budget_csv(ctx.file("frontier.csv"), path);
  sizing::write_budget_json(ctx.file("frontier.json"), path);
  ctx.log << "frontier: " << path.size() << " points, final G " << path.back().g_mw << " MW at ("
          << path.back().ess_mwh << " MWh, " << path.back().rps_mw << " MW)\n";
}

void report(std::ostream& err, const std::string& kind, const std::string& message) {
  err << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

void write_scenarios(const fs::path& path, std::span<const scenarios::Scenario> pool) {
  auto out = open_out(path);
  out << "scenario,step,wind_ms,load_mw\n";
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& sc = pool[i];
    if (sc.wind_ms.size() != sc.load_mw.size()) {
      throw std::invalid_argument("scenario wind and load lengths differ");
    }
    for (std::size_t t = 0; t < sc.wind_ms.size(); ++t) {
      out << i << ',' << t << ',' << sc.wind_ms[t] << ',' << sc.load_mw[t] << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<scenarios::Scenario> read_scenarios(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "scenario,step,wind_ms,load_mw") {
    throw std::runtime_error(path.string() + ": unexpected scenario header");
  }
  std::vector<scenarios::Scenario> pool;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::size_t index = 0, step = 0;
    double wind = 0.0, load = 0.0;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(ss >> index >> c1 >> step >> c2 >> wind >> c3 >> load) || c1 != ',' || c2 != ',' ||
        c3 != ',') {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad row");
    }
    if (index == pool.size()) pool.emplace_back();
    if (index + 1 != pool.size() || step != pool.back().wind_ms.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": rows must be ordered by scenario and step");
    }
    pool.back().wind_ms.push_back(wind);
    pool.back().load_mw.push_back(load);
  }
  return pool;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Control-aware capacity sizing for isolated hybrid energy systems"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir = ".";
  std::uint64_t seed = 0;
  int threads = 0, n_scenarios = 0, rollouts = 0, scenario = 0;
  double alpha = 0.0, budget_max = 0.0;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");
  app.add_option("--out", out_dir, "Output directory for every file a stage reads or writes");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads (0: all cores)")
                          ->check(CLI::NonNegativeNumber);
  auto* alpha_opt = app.add_option("--alpha", alpha, "Risk quantile; alpha-sweep runs only this value")
                        ->check(CLI::Range(0.0, 1.0));
  auto* n_opt = app.add_option("--n-scenarios", n_scenarios, "Wind scenarios per stochastic decision")
                    ->check(CLI::PositiveNumber);
  auto* rollouts_opt = app.add_option("--rollouts", rollouts,
                                      "Rollouts per estimate (eval-policy, alpha-sweep, size-grid)")
                           ->check(CLI::PositiveNumber);
  auto* budget_opt = app.add_option("--budget-max", budget_max, "Largest budget in M EUR (frontier)")
                         ->check(CLI::NonNegativeNumber);

  std::map<std::string, std::function<void(const Context&)>> stages = {
      {"gen-data", gen_data},
      {"mpc-rollout", [&](const Context& ctx) { mpc_rollout(ctx, scenario); }},
      {"sample-dataset", sample_dataset},
      {"train", train},
      {"eval-policy", eval_policy},
      {"alpha-sweep", alpha_sweep},
      {"size-grid", size_grid},
      {"frontier", frontier},
  };
  const std::map<std::string, std::string> help = {
      {"gen-data", "Synthesize or ingest wind/load scenarios"},
      {"mpc-rollout", "Exact MPC rollout over one scenario"},
      {"sample-dataset", "Sample MPC actions for imitation learning"},
      {"train", "Train the policy network"},
      {"eval-policy", "Compare the neural policy with exact MPC"},
      {"alpha-sweep", "Generator usage of the stochastic policy over alpha"},
      {"size-grid", "Generator usage over a capacity grid"},
      {"frontier", "Usage per cost and the optimal investment path"},
  };
  for (const auto& [name, text] : help) {
    auto* sub = app.add_subcommand(name, text);
    if (name == "mpc-rollout") sub->add_option("--scenario", scenario, "Scenario index")->check(CLI::NonNegativeNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    report(err, "usage", e.what());
    return 2;
  }
  const std::string stage = app.get_subcommands().front()->get_name();

  try {
    RunConfig cfg = config_path.empty() ? parse_config(json::object()) : load_config(config_path);
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (alpha_opt->count() > 0) {
      cfg.stochastic.alpha = alpha;
      cfg.sweep.alphas = {alpha};
    }
    if (n_opt->count() > 0) cfg.stochastic.n_scenarios = n_scenarios;
    if (rollouts_opt->count() > 0) {
      cfg.eval.scenarios = rollouts;
      cfg.sweep.scenarios = rollouts;
      cfg.grid.n_scenarios = rollouts;
    }
    if (budget_opt->count() > 0) cfg.frontier.budget_max = budget_max;
    cfg.resolve();

    fs::create_directories(out_dir);
    const int requested = threads_opt->count() > 0 ? threads : cfg.threads;
    const int n_threads = requested > 0 ? requested : default_thread_count();
    const Context ctx{cfg, out_dir, n_threads, out};
    write_resolved(ctx, stage);
    stages.at(stage)(ctx);
  } catch (const ConfigError& e) {
    report(err, "config", e.what());
    return 1;
  } catch (const InputError& e) {
    report(err, "input", e.what());
    return 1;
  } catch (const std::exception& e) {
    report(err, "runtime", e.what());
    return 1;
  }
  return 0;
}

}  // namespace hybridsize::cli
