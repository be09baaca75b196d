#include "hybridsize/sizing.hpp"

#include "hybridsize/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace hybridsize::sizing {

void CostModel::validate() const {
  for (double v : {a_ess, b_ess, a_rps, b_rps}) {
    if (!(std::isfinite(v) && v >= 0.0)) {
      throw std::invalid_argument("cost coefficients must be finite and >= 0");
    }
  }
}

double investment_cost(double ess_mwh, double rps_mw, const CostModel& m) {
  if (!(ess_mwh >= 0.0 && rps_mw >= 0.0)) {
    throw std::invalid_argument("investment_cost: capacities must be >= 0");
  }
  double cost = 0.0;
  if (ess_mwh > 0.0) cost += m.a_ess * ess_mwh + m.b_ess;
  if (rps_mw > 0.0) cost += m.a_rps * rps_mw + m.b_rps;
  return cost;
}

PolicyFactory mpc_factory() {
  return [](const SystemConfig& cfg, const scenarios::Scenario&, std::uint64_t) {
    return mpc::make_mpc_policy(cfg);
  };
}

PolicyFactory neural_factory(neural::PolicyModel model) {
  return [model = std::move(model)](const SystemConfig& cfg, const scenarios::Scenario&,
                                    std::uint64_t) {
    return policy::make_neural_policy(model, cfg);
  };
}

PolicyFactory stochastic_neural_factory(neural::PolicyModel model,
                                        policy::StochasticPolicyConfig spc,
                                        scenarios::PowerCurve curve) {
  spc.validate();
  return [model = std::move(model), spc, curve](const SystemConfig& cfg,
                                                const scenarios::Scenario& sc,
                                                std::uint64_t seed) {
    return policy::make_stochastic_policy(policy::neural_batch(model, cfg), sc.wind_ms, spc,
                                          seed, cfg, curve);
  };
}

PolicyFactory stochastic_mpc_factory(policy::StochasticPolicyConfig spc,
                                     scenarios::PowerCurve curve) {
  spc.validate();
  return [spc, curve](const SystemConfig& cfg, const scenarios::Scenario& sc,
                      std::uint64_t seed) {
    return policy::make_stochastic_policy(policy::mpc_batch(cfg), sc.wind_ms, spc, seed, cfg,
                                          curve);
  };
}

std::size_t scenario_index(std::uint64_t seed, std::size_t i, std::size_t pool_size) {
  if (pool_size == 0) throw std::invalid_argument("empty scenario pool");
  const auto offset = scenarios::derive_seed(seed, 0) % pool_size;
  return (offset + i) % pool_size;
}

namespace {

void check_capacities(double ess_mwh, double rps_mw, const SystemConfig& cfg) {
  if (!(ess_mwh >= 0.0 && ess_mwh <= cfg.global_ess_capacity_mwh)) {
    throw std::invalid_argument("storage capacity outside [0, global_ess_capacity_mwh]");
  }
  if (!(rps_mw >= 0.0 && rps_mw <= cfg.global_rps_capacity_mw)) {
    throw std::invalid_argument("renewable capacity outside [0, global_rps_capacity_mw]");
  }
}

double one_rollout(double ess_mwh, double rps_mw, const PolicyFactory& factory,
                   std::span<const scenarios::Scenario> pool, const SystemConfig& cfg,
                   const EstimateOptions& opt, std::size_t i) {
  const auto c = cfg.with_capacities(ess_mwh, rps_mw);
  const auto& sc = pool[scenario_index(opt.seed, i, pool.size())];
  const auto rps = scenarios::wind_to_power(sc.wind_ms, c.rps_capacity_mw, opt.curve);
  const auto pol = factory(c, sc, scenarios::derive_seed(opt.seed, i + 1));
  return average_dtg_usage(mpc::rollout(pol, rps, sc.load_mw, c, mpc::default_initial_state(c)));
}

Estimate summarize(std::span<const double> usages) {
  const auto n = static_cast<double>(usages.size());
  double mean = 0.0;
  for (double u : usages) mean += u;
  mean /= n;
  Estimate e{mean, 0.0};
  if (usages.size() > 1) {
    double ss = 0.0;
    for (double u : usages) ss += (u - mean) * (u - mean);
    e.stderr_mw = std::sqrt(ss / (n - 1.0) / n);
  }
  return e;
}

void check_options(const EstimateOptions& opt, std::span<const scenarios::Scenario> pool) {
  if (opt.n_scenarios < 1) throw std::invalid_argument("n_scenarios must be >= 1");
  if (pool.empty()) throw std::invalid_argument("empty scenario pool");
  scenarios::validate(opt.curve);
}

}  // namespace

std::vector<double> rollout_usages(double ess_mwh, double rps_mw, const PolicyFactory& factory,
                                   std::span<const scenarios::Scenario> pool,
                                   const SystemConfig& cfg, const EstimateOptions& opt) {
  check_options(opt, pool);
  check_capacities(ess_mwh, rps_mw, cfg);
  std::vector<double> usages(static_cast<std::size_t>(opt.n_scenarios));
  parallel_for(usages.size(), opt.threads, [&](std::size_t i) {
    usages[i] = one_rollout(ess_mwh, rps_mw, factory, pool, cfg, opt, i);
  });
  return usages;
}

Estimate estimate_G(double ess_mwh, double rps_mw, const PolicyFactory& factory,
                    std::span<const scenarios::Scenario> pool, const SystemConfig& cfg,
                    const EstimateOptions& opt) {
  return summarize(rollout_usages(ess_mwh, rps_mw, factory, pool, cfg, opt));
}

std::vector<double> default_ess_axis(const SystemConfig& cfg) {
  std::vector<double> axis;
  for (double f : {0.0, 1.0 / 16, 1.0 / 8, 3.0 / 16, 1.0 / 4, 3.0 / 8, 1.0 / 2, 3.0 / 4, 1.0}) {
    axis.push_back(f * cfg.global_ess_capacity_mwh);
  }
  return axis;
}

std::vector<double> default_rps_axis(const SystemConfig& cfg) {
  std::vector<double> axis;
  for (double f : {0.0, 1.0 / 15, 2.0 / 15, 1.0 / 5, 4.0 / 15, 2.0 / 5, 8.0 / 15, 11.0 / 15, 1.0}) {
    axis.push_back(f * cfg.global_rps_capacity_mw);
  }
  return axis;
}

SizingGrid grid_search(std::span<const double> ess_axis, std::span<const double> rps_axis,
                       const PolicyFactory& factory, const std::string& policy_id,
                       std::span<const scenarios::Scenario> pool, const SystemConfig& cfg,
                       const EstimateOptions& opt) {
  if (ess_axis.empty() || rps_axis.empty()) throw std::invalid_argument("empty capacity axis");
  check_options(opt, pool);
  for (double e : ess_axis) check_capacities(e, 0.0, cfg);
  for (double p : rps_axis) check_capacities(0.0, p, cfg);

  SizingGrid grid;
  grid.ess_axis.assign(ess_axis.begin(), ess_axis.end());
  grid.rps_axis.assign(rps_axis.begin(), rps_axis.end());
  grid.n_scenarios = opt.n_scenarios;
  grid.policy_id = policy_id;
  grid.seed = opt.seed;

  const std::size_t cells = ess_axis.size() * rps_axis.size();
  const auto n = static_cast<std::size_t>(opt.n_scenarios);
  std::vector<double> usages(cells * n);
  parallel_for(usages.size(), opt.threads, [&](std::size_t k) {
    const std::size_t c = k / n, i = k % n;
    usages[k] = one_rollout(ess_axis[c / rps_axis.size()], rps_axis[c % rps_axis.size()],
                            factory, pool, cfg, opt, i);
  });
  for (std::size_t c = 0; c < cells; ++c) {
    const auto e = summarize(std::span<const double>(usages).subspan(c * n, n));
    grid.g_mw.push_back(e.g_mw);
    grid.stderr_mw.push_back(e.stderr_mw);
  }
  return grid;
}

namespace {

// True when cell a is preferred to the current best b.
bool better(const BudgetPoint& a, const BudgetPoint& b) {
  if (!b.feasible) return true;
  if (a.g_mw != b.g_mw) return a.g_mw < b.g_mw;
  if (a.cost != b.cost) return a.cost < b.cost;
  if (a.ess_mwh != b.ess_mwh) return a.ess_mwh < b.ess_mwh;
  return a.rps_mw < b.rps_mw;
}

std::vector<BudgetPoint> cell_points(const SizingGrid& grid, const CostModel& m) {
  if (grid.g_mw.size() != grid.ess_axis.size() * grid.rps_axis.size() ||
      grid.stderr_mw.size() != grid.g_mw.size()) {
    throw std::invalid_argument("grid matrix does not match its axes");
  }
  m.validate();
  std::vector<BudgetPoint> cells;
  for (std::size_t i = 0; i < grid.ess_axis.size(); ++i) {
    for (std::size_t j = 0; j < grid.rps_axis.size(); ++j) {
      const auto c = grid.cell(i, j);
      cells.push_back({0.0, true, grid.g_mw[c], grid.stderr_mw[c], grid.ess_axis[i],
                       grid.rps_axis[j], investment_cost(grid.ess_axis[i], grid.rps_axis[j], m)});
    }
  }
  return cells;
}

}  // namespace

std::vector<BudgetPoint> usage_per_cost(const SizingGrid& grid, const CostModel& m,
                                        std::span<const double> budgets) {
  if (!std::is_sorted(budgets.begin(), budgets.end())) {
    throw std::invalid_argument("budgets must be sorted ascending");
  }
  const auto cells = cell_points(grid, m);
  std::vector<BudgetPoint> out;
  out.reserve(budgets.size());
  for (double b : budgets) {
    BudgetPoint best;
    for (const auto& c : cells) {
      if (c.cost <= b && better(c, best)) best = c;
    }
    best.budget = b;
    out.push_back(best);
  }
  return out;
}

std::vector<BudgetPoint> optimal_frontier(const SizingGrid& grid, const CostModel& m) {
  std::vector<double> budgets;
  for (const auto& c : cell_points(grid, m)) budgets.push_back(c.cost);
  std::sort(budgets.begin(), budgets.end());
  budgets.erase(std::unique(budgets.begin(), budgets.end()), budgets.end());
  std::vector<BudgetPoint> path;
  for (const auto& p : usage_per_cost(grid, m, budgets)) {
    if (path.empty() || p.ess_mwh != path.back().ess_mwh || p.rps_mw != path.back().rps_mw) {
      path.push_back(p);
    }
  }
  return path;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  return out;
}

}  // namespace

void write_grid_csv(const std::filesystem::path& path, const SizingGrid& grid) {
  auto out = open_out(path);
  out << "ess_mwh,rps_mw,g_mw,stderr_mw\n";
  for (std::size_t i = 0; i < grid.ess_axis.size(); ++i) {
    for (std::size_t j = 0; j < grid.rps_axis.size(); ++j) {
      const auto c = grid.cell(i, j);
      out << grid.ess_axis[i] << ',' << grid.rps_axis[j] << ',' << grid.g_mw[c] << ','
          << grid.stderr_mw[c] << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

SizingGrid read_grid_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "ess_mwh,rps_mw,g_mw,stderr_mw") {
    throw std::runtime_error(path.string() + ": unexpected grid header");
  }
  std::map<std::pair<double, double>, std::pair<double, double>> rows;
  std::vector<double> ess, rps;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    double v[4];
    char sep = ',';
    for (int k = 0; k < 4; ++k) {
      if ((k > 0 && !(ss >> sep)) || sep != ',' || !(ss >> v[k])) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad row");
      }
    }
    if (!rows.emplace(std::pair{v[0], v[1]}, std::pair{v[2], v[3]}).second) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": duplicate cell");
    }
    ess.push_back(v[0]);
    rps.push_back(v[1]);
  }
  for (auto* axis : {&ess, &rps}) {
    std::sort(axis->begin(), axis->end());
    axis->erase(std::unique(axis->begin(), axis->end()), axis->end());
  }
  if (rows.empty() || rows.size() != ess.size() * rps.size()) {
    throw std::runtime_error(path.string() + ": rows do not form a full grid");
  }
  SizingGrid grid;
  grid.ess_axis = ess;
  grid.rps_axis = rps;
  for (double e : ess) {
    for (double p : rps) {
      const auto& [g, se] = rows.at({e, p});
      grid.g_mw.push_back(g);
      grid.stderr_mw.push_back(se);
    }
  }
  return grid;
}

void write_budget_csv(const std::filesystem::path& path, std::span<const BudgetPoint> points) {
  auto out = open_out(path);
  out << "budget,feasible,g_mw,stderr_mw,ess_mwh,rps_mw,cost\n";
  for (const auto& p : points) {
    out << p.budget << ',' << (p.feasible ? 1 : 0) << ',';
    if (p.feasible) {
      out << p.g_mw << ',' << p.stderr_mw << ',' << p.ess_mwh << ',' << p.rps_mw << ',' << p.cost;
    } else {
      out << ",,,,";
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_budget_json(const std::filesystem::path& path, std::span<const BudgetPoint> points) {
  auto doc = nlohmann::json::array();
  for (const auto& p : points) {
    nlohmann::json j = {{"budget", p.budget}, {"feasible", p.feasible}};
    if (p.feasible) {
      j["g_mw"] = p.g_mw;
      j["stderr_mw"] = p.stderr_mw;
      j["ess_mwh"] = p.ess_mwh;
      j["rps_mw"] = p.rps_mw;
      j["cost"] = p.cost;
    }
    doc.push_back(j);
  }
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace hybridsize::sizing
