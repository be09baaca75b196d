#include "hybridsize/mpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

namespace hybridsize::mpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct DtgBounds {
  double lo;
  double hi;
};

DtgBounds dtg_bounds(OnOff s, const SystemConfig& cfg) {
  switch (s) {
    case OnOff::On: return {cfg.dtg_min_mw, cfg.dtg_max_mw};
    case OnOff::Off: return {0.0, 0.0};
    case OnOff::Free: break;
  }
  return {0.0, cfg.dtg_max_mw};
}

// Turns the raw solution of one step into an action that meets the action
// invariants exactly: the generator is snapped onto its band, storage power
// onto what the current energy allows, and curtailment closes the balance.
Action finalize_step(double dtg, double ess, bool on, double energy, double rps, double load,
                     const SystemConfig& cfg) {
  Action a;
  a.dtg_mw = on ? std::clamp(dtg, cfg.dtg_min_mw, cfg.dtg_max_mw) : 0.0;
  a.ess_mw = std::clamp(ess, -max_discharge_mw(energy, cfg), max_charge_mw(energy, cfg));
  a.curtail_mw = a.dtg_mw + rps - load - a.ess_mw;
  if (a.curtail_mw < 0.0) {
    a.ess_mw = std::max(a.ess_mw + a.curtail_mw, -max_discharge_mw(energy, cfg));
    a.curtail_mw = a.dtg_mw + rps - load - a.ess_mw;
  }
  if (a.curtail_mw < 0.0 && on) {
    a.dtg_mw = std::min(a.dtg_mw - a.curtail_mw, cfg.dtg_max_mw);
    a.curtail_mw = a.dtg_mw + rps - load - a.ess_mw;
  }
  return a;
}

// -1 if a < b, 1 if a > b, 0 if equal within tol, comparing front to back.
int lexicographic_compare(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    if (a[i] < b[i] - tol) return -1;
    if (a[i] > b[i] + tol) return 1;
  }
  return 0;
}

}  // namespace

Eigen::VectorXd MiqpProblem::bounds_rhs(std::span<const OnOff> pattern) const {
  if (static_cast<int>(pattern.size()) != horizon) {
    throw std::invalid_argument("pattern length must equal the horizon");
  }
  Eigen::VectorXd h = relaxation.h;
  for (int k = 0; k < horizon; ++k) {
    const auto b = dtg_bounds(pattern[k], cfg);
    h[row(k, Row::DtgLower)] = -b.lo;
    h[row(k, Row::DtgUpper)] = b.hi;
  }
  return h;
}

MiqpProblem build_horizon_problem(const SystemState& state, const HorizonWindow& window,
                                  const SystemConfig& cfg) {
  const int H = static_cast<int>(window.size());
  if (window.load_mw.size() != window.rps_mw.size()) {
    throw std::invalid_argument("window rps and load lengths differ");
  }
  if (H < 1 || H != cfg.horizon_steps) {
    throw std::invalid_argument("window length " + std::to_string(H) +
                                " does not match horizon_steps " +
                                std::to_string(cfg.horizon_steps));
  }
  if (!(state.ess_energy_mwh >= -1e-6 && state.ess_energy_mwh <= cfg.ess_capacity_mwh + 1e-6)) {
    throw std::invalid_argument("initial storage energy outside [0, capacity]");
  }

  const int n = H * kVarsPerStep;
  const int p = 2 * H;
  const int m = H * kRowsPerStep;
  const auto& w = cfg.weights;
  const double w_usage = w.dtg_usage / H;
  const double w_smooth = w.dtg_smooth / H;
  const double w_ess = w.ess_smooth / H;

  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m, n);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(m);

  using P = MiqpProblem;
  const double pmax = cfg.ess_power_max_mw;
  for (int k = 0; k < H; ++k) {
    const int d = P::index(k, Var::Dtg);
    const int ep = P::index(k, Var::EssPlus);
    const int em = P::index(k, Var::EssMinus);
    const int cu = P::index(k, Var::Curtail);
    const int e = P::index(k, Var::Energy);

    // Objective, 1/2 z'Qz + c'z.
    c[d] += w_usage;
    Q(d, d) += 2.0 * w_smooth;
    if (k > 0) {
      const int dp = P::index(k - 1, Var::Dtg);
      Q(dp, dp) += 2.0 * w_smooth;
      Q(d, dp) -= 2.0 * w_smooth;
      Q(dp, d) -= 2.0 * w_smooth;
    } else {
      c[d] -= 2.0 * w_smooth * state.prev_dtg_mw;
    }
    Q(ep, ep) += 2.0 * w_ess;
    Q(em, em) += 2.0 * w_ess;
    Q(ep, em) -= 2.0 * w_ess;
    Q(em, ep) -= 2.0 * w_ess;

    // Balance: dtg - ess_plus + ess_minus - curtail = load - rps.
    A(2 * k, d) = 1.0;
    A(2 * k, ep) = -1.0;
    A(2 * k, em) = 1.0;
    A(2 * k, cu) = -1.0;
    b[2 * k] = window.load_mw[k] - window.rps_mw[k];

    // Recursion: E_k - E_{k-1} - dt eta_ch P+ + dt / eta_dis P- = 0.
    A(2 * k + 1, e) = 1.0;
    A(2 * k + 1, ep) = -cfg.dt_hours * cfg.eta_charge;
    A(2 * k + 1, em) = cfg.dt_hours / cfg.eta_discharge;
    if (k > 0) {
      A(2 * k + 1, P::index(k - 1, Var::Energy)) = -1.0;
    } else {
      b[2 * k + 1] = state.ess_energy_mwh;
    }

    auto set_row = [&](Row r, std::initializer_list<std::pair<int, double>> coeffs, double rhs) {
      const int i = P::row(k, r);
      for (const auto& [j, v] : coeffs) G(i, j) = v;
      h[i] = rhs;
    };
    set_row(Row::DtgLower, {{d, -1.0}}, 0.0);
    set_row(Row::DtgUpper, {{d, 1.0}}, cfg.dtg_max_mw);
    set_row(Row::EssPlusLower, {{ep, -1.0}}, 0.0);
    set_row(Row::EssPlusUpper, {{ep, 1.0}}, pmax);
    set_row(Row::EssMinusLower, {{em, -1.0}}, 0.0);
    set_row(Row::EssMinusUpper, {{em, 1.0}}, pmax);
    set_row(Row::EssNetUpper, {{ep, 1.0}, {em, -1.0}}, pmax);
    set_row(Row::EssNetLower, {{ep, -1.0}, {em, 1.0}}, pmax);
    set_row(Row::CurtailLower, {{cu, -1.0}}, 0.0);
    set_row(Row::EnergyLower, {{e, -1.0}}, 0.0);
    set_row(Row::EnergyUpper, {{e, 1.0}}, cfg.ess_capacity_mwh);
  }
  c[P::index(H - 1, Var::Energy)] -= w.ess_terminal;

  MiqpProblem prob;
  prob.horizon = H;
  prob.cfg = cfg;
  prob.initial = state;
  prob.window = window;
  prob.relaxation = qp::make_program(std::move(Q), std::move(c), std::move(A), std::move(b),
                                     std::move(G), std::move(h));
  prob.objective_constant = w_smooth * state.prev_dtg_mw * state.prev_dtg_mw;
  return prob;
}

double evaluate_objective(std::span<const double> dtg_mw, std::span<const double> ess_mw,
                          double terminal_energy_mwh, const SystemState& state,
                          const SystemConfig& cfg) {
  if (dtg_mw.size() != ess_mw.size() || dtg_mw.empty()) {
    throw std::invalid_argument("plan sequences must be nonempty and of equal length");
  }
  const auto& w = cfg.weights;
  const double H = static_cast<double>(dtg_mw.size());
  double usage = 0.0, smooth = 0.0, ess = 0.0;
  double prev = state.prev_dtg_mw;
  for (std::size_t k = 0; k < dtg_mw.size(); ++k) {
    usage += dtg_mw[k];
    smooth += (dtg_mw[k] - prev) * (dtg_mw[k] - prev);
    ess += ess_mw[k] * ess_mw[k];
    prev = dtg_mw[k];
  }
  return (w.dtg_usage * usage + w.dtg_smooth * smooth + w.ess_smooth * ess) / H -
         w.ess_terminal * terminal_energy_mwh;
}

PlanSolution solve_miqp(const MiqpProblem& prob, const BranchAndBoundSettings& settings,
                        std::span<const std::vector<bool>> start_patterns) {
  const auto t0 = std::chrono::steady_clock::now();
  const int H = prob.horizon;
  const auto& cfg = prob.cfg;
  const qp::PreparedProgram prepared(prob.relaxation);

  struct Node {
    std::vector<OnOff> pattern;
    double parent_bound;
  };
  struct Incumbent {
    std::vector<OnOff> pattern;
    Eigen::VectorXd z;
    std::vector<double> dtg;
    double value = kInf;
  };

  qp::Settings node_settings = settings.qp;
  node_settings.polish = false;
  auto solve_node = [&](const std::vector<OnOff>& pattern, long& failures,
                        const qp::Settings& qs) {
    const Eigen::VectorXd h = prob.bounds_rhs(pattern);
    auto sol = prepared.solve(h, std::nullopt, qs);
    if (sol.status == qp::Status::IterLimit) {
      qp::Settings retry = qs;
      retry.max_iterations *= 4;
      retry.regularization *= 100.0;
      sol = prepared.solve(h, std::nullopt, retry);
      if (sol.status == qp::Status::IterLimit) ++failures;
    }
    return sol;
  };
  auto gap_of = [&](double v) { return settings.relative_gap * (1.0 + std::abs(v)); };

  PlanSolution out;
  Incumbent best;
  double min_pruned_bound = kInf;
  bool complete = true;

  auto offer = [&](std::vector<OnOff> fixed, const Eigen::VectorXd& z, double value) {
    std::vector<double> dtg(H);
    for (int k = 0; k < H; ++k) dtg[k] = z[MiqpProblem::index(k, Var::Dtg)];
    const double tie = 1e-9 * (1.0 + std::abs(value));
    const bool better = value < best.value - tie ||
                        (std::abs(value - best.value) <= tie &&
                         lexicographic_compare(dtg, best.dtg, 1e-7) < 0);
    if (better) {
      best.value = std::min(value, best.value);
      best.pattern = std::move(fixed);
      best.z = z;
      best.dtg = std::move(dtg);
    }
  };
  auto try_pattern = [&](std::vector<OnOff> fixed) {
    ++out.nodes;
    const auto leaf = solve_node(fixed, out.qp_failures, node_settings);
    if (leaf.status == qp::Status::Optimal) {
      offer(std::move(fixed), leaf.z, leaf.objective + prob.objective_constant);
    }
  };
  for (const auto& candidate : start_patterns) {
    if (static_cast<int>(candidate.size()) != H) {
      throw std::invalid_argument("start pattern length differs from the horizon");
    }
    std::vector<OnOff> fixed(H);
    for (int k = 0; k < H; ++k) fixed[k] = candidate[k] ? OnOff::On : OnOff::Off;
    try_pattern(std::move(fixed));
  }
  bool at_root = true;

  std::vector<Node> stack;
  stack.push_back({std::vector<OnOff>(H, OnOff::Free), -kInf});
  while (!stack.empty()) {
    if (out.nodes >= settings.max_nodes) {
      complete = false;
      break;
    }
    Node node = std::move(stack.back());
    stack.pop_back();
    if (node.parent_bound >= best.value - gap_of(best.value)) {
      min_pruned_bound = std::min(min_pruned_bound, node.parent_bound);
      continue;
    }
    ++out.nodes;
    const auto sol = solve_node(node.pattern, out.qp_failures, node_settings);
    if (sol.status != qp::Status::Optimal) continue;
    const double bound = sol.objective + prob.objective_constant;
    if (at_root && settings.root_rounding) {
      at_root = false;
      std::vector<OnOff> rounded(H);
      for (int k = 0; k < H; ++k) {
        const double d = sol.z[MiqpProblem::index(k, Var::Dtg)];
        rounded[k] = d >= 0.5 * cfg.dtg_min_mw ? OnOff::On : OnOff::Off;
      }
      try_pattern(std::move(rounded));
    }
    if (bound >= best.value - gap_of(best.value)) {
      min_pruned_bound = std::min(min_pruned_bound, bound);
      continue;
    }

    int branch_step = -1;
    double best_score = -1.0;
    for (int k = 0; k < H; ++k) {
      if (node.pattern[k] != OnOff::Free) continue;
      const double d = sol.z[MiqpProblem::index(k, Var::Dtg)];
      if (d <= settings.integrality_tol || d >= cfg.dtg_min_mw - settings.integrality_tol) continue;
      const double frac = d / cfg.dtg_min_mw;
      const double score = std::min(frac, 1.0 - frac);
      if (score > best_score) {
        best_score = score;
        branch_step = k;
      }
    }

    if (branch_step >= 0) {
      Node off{node.pattern, bound};
      off.pattern[branch_step] = OnOff::Off;
      Node on{std::move(node.pattern), bound};
      on.pattern[branch_step] = OnOff::On;
      stack.push_back(std::move(off));
      stack.push_back(std::move(on));
      continue;
    }

    // Integral relaxation: fix the pattern it implies and solve exactly.
    std::vector<OnOff> fixed = node.pattern;
    bool had_free = false;
    for (int k = 0; k < H; ++k) {
      if (fixed[k] != OnOff::Free) continue;
      had_free = true;
      const double d = sol.z[MiqpProblem::index(k, Var::Dtg)];
      fixed[k] = d >= 0.5 * cfg.dtg_min_mw ? OnOff::On : OnOff::Off;
    }
    if (!had_free) {
      offer(std::move(fixed), sol.z, bound);
    } else {
      try_pattern(std::move(fixed));
    }
  }

  if (!std::isfinite(best.value)) {
    throw std::runtime_error("horizon problem has no feasible generator schedule");
  }

  // Final exact solve of the incumbent pattern with active-set polishing.
  if (settings.qp.polish) {
    const auto exact = solve_node(best.pattern, out.qp_failures, settings.qp);
    if (exact.status == qp::Status::Optimal) best.z = exact.z;
  }
  out.z = best.z;
  out.on.resize(H);
  out.actions.resize(H);
  out.energy_mwh.resize(H);
  std::vector<double> dtg(H), ess(H);
  double energy = prob.initial.ess_energy_mwh;
  for (int k = 0; k < H; ++k) {
    out.on[k] = best.pattern[k] == OnOff::On;
    const double raw_ess = best.z[MiqpProblem::index(k, Var::EssPlus)] -
                           best.z[MiqpProblem::index(k, Var::EssMinus)];
    out.actions[k] = finalize_step(best.z[MiqpProblem::index(k, Var::Dtg)], raw_ess, out.on[k],
                                   energy, prob.window.rps_mw[k], prob.window.load_mw[k], cfg);
    energy = step_storage(energy, out.actions[k].ess_mw, cfg);
    out.energy_mwh[k] = energy;
    dtg[k] = out.actions[k].dtg_mw;
    ess[k] = out.actions[k].ess_mw;
  }
  out.objective = evaluate_objective(dtg, ess, energy, prob.initial, cfg);
  out.bound_gap = complete ? std::max(0.0, best.value - min_pruned_bound) : kInf;
  if (complete && !std::isfinite(min_pruned_bound)) out.bound_gap = 0.0;
  out.solve_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

Action mpc_policy(const SystemState& state, const HorizonWindow& window, const SystemConfig& cfg) {
  return solve_miqp(build_horizon_problem(state, window, cfg)).actions.front();
}

Policy make_mpc_policy(const SystemConfig& cfg) {
  // The previous plan shifted by one step is a strong first incumbent.
  auto previous = std::make_shared<std::vector<bool>>();
  return [cfg, previous](const SystemState& state, const HorizonWindow& window, std::size_t) {
    std::vector<std::vector<bool>> starts;
    if (previous->size() == static_cast<std::size_t>(cfg.horizon_steps)) {
      std::vector<bool> shifted(previous->begin() + 1, previous->end());
      shifted.push_back(previous->back());
      starts.push_back(std::move(shifted));
    }
    auto plan = solve_miqp(build_horizon_problem(state, window, cfg), {}, starts);
    *previous = std::move(plan.on);
    return plan.actions.front();
  };
}

SystemState default_initial_state(const SystemConfig& cfg) {
  return {0.5 * cfg.ess_capacity_mwh, 0.0};
}

std::vector<double> padded_window(std::span<const double> series, std::size_t start,
                                  std::size_t horizon) {
  if (series.empty()) throw std::invalid_argument("empty series");
  std::vector<double> out(horizon);
  for (std::size_t i = 0; i < horizon; ++i) {
    out[i] = series[std::min(start + i, series.size() - 1)];
  }
  return out;
}

Trajectory rollout(const Policy& policy, std::span<const double> rps_mw,
                   std::span<const double> load_mw, const SystemConfig& cfg,
                   const SystemState& initial, std::size_t steps) {
  if (const auto v = validate_config(cfg); !v.empty()) {
    throw std::invalid_argument("invalid config: " + v.front().field + ": " + v.front().message);
  }
  if (rps_mw.size() != load_mw.size() || rps_mw.empty()) {
    throw std::invalid_argument("rps and load series must be nonempty and of equal length");
  }
  const std::size_t T = steps == 0 ? rps_mw.size() : steps;
  if (T > rps_mw.size()) throw std::invalid_argument("rollout longer than the series");
  const double peak_load = *std::max_element(load_mw.begin(), load_mw.end());
  if (peak_load > cfg.dtg_max_mw) {
    throw std::invalid_argument("peak load " + std::to_string(peak_load) +
                                " MW exceeds the generator limit");
  }

  const auto H = static_cast<std::size_t>(cfg.horizon_steps);
  Trajectory traj;
  traj.steps.reserve(T);
  SystemState state = initial;
  for (std::size_t t = 0; t < T; ++t) {
    const HorizonWindow window{padded_window(rps_mw, t, H), padded_window(load_mw, t, H)};
    const Action a = policy(state, window, t);
    const auto violations = action_violations(a, state, rps_mw[t], load_mw[t], cfg);
    if (!violations.empty()) {
      throw std::runtime_error("policy returned an infeasible action at step " +
                               std::to_string(t) + ": " + violations.front());
    }
    traj.steps.push_back({a, state, rps_mw[t], load_mw[t]});
    state = {step_storage(state.ess_energy_mwh, a.ess_mw, cfg), a.dtg_mw};
  }
  traj.final_state = state;
  return traj;
}

}  // namespace hybridsize::mpc
