#include "run_config.hpp"

#include <fstream>
#include <set>
#include <type_traits>

namespace hybridsize::cli {

using nlohmann::json;

namespace {

template <typename V>
void visit(V& v, ObjectiveWeights& w) {
  v("dtg_usage", w.dtg_usage);
  v("dtg_smooth", w.dtg_smooth);
  v("ess_smooth", w.ess_smooth);
  v("ess_terminal", w.ess_terminal);
}

template <typename V>
void visit(V& v, SystemConfig& c) {
  v("dt_hours", c.dt_hours);
  v("horizon_steps", c.horizon_steps);
  v("dtg_min_mw", c.dtg_min_mw);
  v("dtg_max_mw", c.dtg_max_mw);
  v("ess_capacity_mwh", c.ess_capacity_mwh);
  v("eta_charge", c.eta_charge);
  v("eta_discharge", c.eta_discharge);
  v("rps_capacity_mw", c.rps_capacity_mw);
  v("global_ess_capacity_mwh", c.global_ess_capacity_mwh);
  v("global_rps_capacity_mw", c.global_rps_capacity_mw);
  v.object("weights", c.weights);
}

template <typename V>
void visit(V& v, scenarios::WindParams& w) {
  v("mean_ms", w.mean_ms);
  v("reversion_per_hour", w.reversion_per_hour);
  v("stationary_std_ms", w.stationary_std_ms);
}

template <typename V>
void visit(V& v, scenarios::LoadParams& l) {
  v("mean_mw", l.mean_mw);
  v("diurnal_amplitude_mw", l.diurnal_amplitude_mw);
  v("reversion_per_hour", l.reversion_per_hour);
  v("stationary_std_mw", l.stationary_std_mw);
  v("min_mw", l.min_mw);
  v("max_mw", l.max_mw);
}

template <typename V>
void visit(V& v, scenarios::PowerCurve& c) {
  v("a3", c.a3);
  v("a2", c.a2);
  v("a1", c.a1);
  v("a0", c.a0);
  v("cut_in_ms", c.cut_in_ms);
  v("rated_ms", c.rated_ms);
  v("cut_out_ms", c.cut_out_ms);
  v("rated_power_fraction", c.rated_power_fraction);
}

template <typename V>
void visit(V& v, ScenarioSection& s) {
  v("steps", s.steps);
  v("count", s.count);
  v.object("wind", s.wind);
  v.object("load", s.load);
  v.object("power_curve", s.curve);
  v("wind_csv", s.wind_csv);
  v("load_csv", s.load_csv);
  v("wind_column", s.wind_column);
  v("load_column", s.load_column);
  v("source_dt_hours", s.source_dt_hours);
}

template <typename V>
void visit(V& v, DatasetSection& d) {
  v("samples", d.samples);
  v("pool_steps", d.pool_steps);
  v("prob_prev_off", d.prob_prev_off);
  v("nominal_load_mw", d.nominal_load_mw);
}

template <typename V>
void visit(V& v, neural::Architecture& a) {
  v("channels", a.channels);
  v("blocks", a.blocks);
  v("cond_hidden", a.cond_hidden);
  v("head_hidden1", a.head_hidden1);
  v("head_hidden2", a.head_hidden2);
  v("groups", a.groups);
  v("kernel", a.kernel);
}

template <typename V>
void visit(V& v, neural::TrainConfig& t) {
  v("epochs", t.epochs);
  v("batch_size", t.batch_size);
  v("learning_rate", t.learning_rate);
  v("cosine_decay", t.cosine_decay);
  v("weight_decay", t.weight_decay);
  v("huber_delta", t.huber_delta);
  v("validation_fraction", t.validation_fraction);
}

template <typename V>
void visit(V& v, policy::StochasticPolicyConfig& s) {
  v("n_scenarios", s.n_scenarios);
  v("alpha", s.alpha);
  v("sigma_ms", s.sigma_ms);
}

template <typename V>
void visit(V& v, EvalSection& e) {
  v("scenarios", e.scenarios);
  v("steps", e.steps);
}

template <typename V>
void visit(V& v, SweepSection& s) {
  v("alphas", s.alphas);
  v("scenarios", s.scenarios);
  v("base", s.base);
}

template <typename V>
void visit(V& v, sizing::CostModel& m) {
  v("a_ess", m.a_ess);
  v("b_ess", m.b_ess);
  v("a_rps", m.a_rps);
  v("b_rps", m.b_rps);
}

template <typename V>
void visit(V& v, GridSection& g) {
  v("ess_axis", g.ess_axis);
  v("rps_axis", g.rps_axis);
  v("n_scenarios", g.n_scenarios);
  v("policy", g.policy);
}

template <typename V>
void visit(V& v, FrontierSection& f) {
  v("budget_max", f.budget_max);
  v("budget_step", f.budget_step);
}

template <typename V>
void visit(V& v, PathSection& p) {
  v("scenarios", p.scenarios);
  v("dataset", p.dataset);
  v("weights", p.weights);
  v("grid", p.grid);
}

template <typename V>
void visit(V& v, RunConfig& c) {
  v("seed", c.seed);
  v("threads", c.threads);
  v.object("system", c.system);
  v.object("scenarios", c.scenarios);
  v.object("dataset", c.dataset);
  v.object("network", c.network);
  v.object("train", c.train);
  v.object("stochastic", c.stochastic);
  v.object("eval", c.eval);
  v.object("sweep", c.sweep);
  v.object("costs", c.costs);
  v.object("grid", c.grid);
  v.object("frontier", c.frontier);
  v.object("paths", c.paths);
}

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <typename T>
  void operator()(const char* key, T& out) {
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    read(*it, out, path_.empty() ? key : path_ + "." + key);
  }

  template <typename T>
  void object(const char* key, T& out) {
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    Reader sub(*it, path_.empty() ? key : path_ + "." + key);
    visit(sub, out);
    sub.finish();
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) {
        throw ConfigError("unknown key " + (path_.empty() ? key : path_ + "." + key));
      }
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  static void read(const json& v, double& out, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path + ": expected a number");
    out = v.get<double>();
  }
  static void read(const json& v, bool& out, const std::string& path) {
    if (!v.is_boolean()) throw ConfigError(path + ": expected true or false");
    out = v.get<bool>();
  }
  static void read(const json& v, std::string& out, const std::string& path) {
    if (!v.is_string()) throw ConfigError(path + ": expected a string");
    out = v.get<std::string>();
  }
  template <typename I>
    requires std::is_integral_v<I>
  static void read(const json& v, I& out, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
    if constexpr (std::is_unsigned_v<I>) {
      if (v.is_number_unsigned()) {
        out = v.get<I>();
        return;
      }
      if (v.get<long long>() < 0) throw ConfigError(path + ": must be >= 0");
      out = static_cast<I>(v.get<long long>());
    } else {
      out = v.get<I>();
    }
  }
  static void read(const json& v, std::vector<double>& out, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path + ": expected an array of numbers");
    out.clear();
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError(path + ": expected an array of numbers");
      out.push_back(x.get<double>());
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

class Writer {
 public:
  template <typename T>
  void operator()(const char* key, const T& v) {
    j[key] = v;
  }
  template <typename T>
  void object(const char* key, T& v) {
    Writer sub;
    visit(sub, v);
    j[key] = std::move(sub.j);
  }
  json j = json::object();
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

// Runs a library validate() and rethrows its complaint as a ConfigError.
template <typename Fn>
void check(const std::string& section, Fn&& fn) {
  try {
    fn();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(section + ": " + e.what());
  }
}

}  // namespace

void RunConfig::resolve() {
  system = system.with_capacities(system.ess_capacity_mwh, system.rps_capacity_mw);
  const auto violations = validate_config(system);
  if (!violations.empty()) {
    throw ConfigError("system." + violations.front().field + ": " + violations.front().message);
  }
  network.horizon = system.horizon_steps;
  scenarios.wind.dt_hours = system.dt_hours;
  scenarios.load.dt_hours = system.dt_hours;

  require(threads >= 0, "threads: must be >= 0");
  require(scenarios.steps >= 1, "scenarios.steps: must be >= 1");
  require(scenarios.count >= 1, "scenarios.count: must be >= 1");
  require(scenarios.source_dt_hours >= 0.0, "scenarios.source_dt_hours: must be >= 0");
  require(scenarios.wind_csv.empty() == scenarios.load_csv.empty(),
          "scenarios: wind_csv and load_csv must be given together");
  check("scenarios.power_curve", [&] { scenarios::validate(scenarios.curve); });
  require(dataset.samples >= 1, "dataset.samples: must be >= 1");
  require(dataset.pool_steps >= static_cast<std::size_t>(system.horizon_steps),
          "dataset.pool_steps: must cover one horizon");
  require(dataset.prob_prev_off >= 0.0 && dataset.prob_prev_off <= 1.0,
          "dataset.prob_prev_off: must lie in [0, 1]");
  require(dataset.nominal_load_mw > 0.0, "dataset.nominal_load_mw: must be > 0");
  check("network", [&] { network.validate(); });
  require(train.epochs >= 1, "train.epochs: must be >= 1");
  require(train.batch_size >= 1, "train.batch_size: must be >= 1");
  require(train.learning_rate > 0.0, "train.learning_rate: must be > 0");
  require(train.weight_decay >= 0.0, "train.weight_decay: must be >= 0");
  require(train.huber_delta > 0.0, "train.huber_delta: must be > 0");
  require(train.validation_fraction > 0.0 && train.validation_fraction < 1.0,
          "train.validation_fraction: must lie in (0, 1)");
  check("stochastic", [&] { stochastic.validate(); });
  require(eval.scenarios >= 1, "eval.scenarios: must be >= 1");
  require(!sweep.alphas.empty(), "sweep.alphas: must not be empty");
  for (double a : sweep.alphas) require(a >= 0.0 && a <= 1.0, "sweep.alphas: must lie in [0, 1]");
  require(sweep.scenarios >= 1, "sweep.scenarios: must be >= 1");
  require(sweep.base == "neural" || sweep.base == "mpc", "sweep.base: must be neural or mpc");
  check("costs", [&] { costs.validate(); });
  for (double e : grid.ess_axis) {
    require(e >= 0.0 && e <= system.global_ess_capacity_mwh,
            "grid.ess_axis: values must lie in [0, global_ess_capacity_mwh]");
  }
  for (double p : grid.rps_axis) {
    require(p >= 0.0 && p <= system.global_rps_capacity_mw,
            "grid.rps_axis: values must lie in [0, global_rps_capacity_mw]");
  }
  require(grid.n_scenarios >= 1, "grid.n_scenarios: must be >= 1");
  require(grid.policy == "neural" || grid.policy == "mpc" || grid.policy == "stochastic",
          "grid.policy: must be neural, mpc or stochastic");
  require(frontier.budget_max >= 0.0, "frontier.budget_max: must be >= 0");
  require(frontier.budget_step > 0.0, "frontier.budget_step: must be > 0");
  for (const auto* p : {&paths.scenarios, &paths.dataset, &paths.weights, &paths.grid}) {
    require(!p->empty(), "paths: file names must not be empty");
  }
}

RunConfig parse_config(const json& doc) {
  RunConfig cfg;
  Reader r(doc, "");
  visit(r, cfg);
  r.finish();
  cfg.resolve();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

json to_json(const RunConfig& cfg) {
  Writer w;
  auto copy = cfg;
  visit(w, copy);
  return w.j;
}

}  // namespace hybridsize::cli
