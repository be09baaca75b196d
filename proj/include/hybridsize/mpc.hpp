#pragma once

// Horizon MIQP for the hybrid system and its branch-and-bound solver, the
// deterministic MPC policy (first action of the optimal plan), and the
// receding-horizon rollout used by every policy in the project.

#include "hybridsize/core.hpp"
#include "hybridsize/qp.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace hybridsize::mpc {

/// Generator on/off decision for one step inside branch and bound. `Free`
/// is the continuous relaxation of the binary.
enum class OnOff : std::uint8_t { Free, Off, On };

/// Per-step continuous variables, flattened step-major into the QP vector.
enum class Var : int { Dtg = 0, EssPlus = 1, EssMinus = 2, Curtail = 3, Energy = 4 };
inline constexpr int kVarsPerStep = 5;

/// Rows of G per step, in order.
enum class Row : int {
  DtgLower = 0,
  DtgUpper,
  EssPlusLower,
  EssPlusUpper,
  EssMinusLower,
  EssMinusUpper,
  EssNetUpper,
  EssNetLower,
  CurtailLower,
  EnergyLower,
  EnergyUpper,
};
inline constexpr int kRowsPerStep = 11;

/// The horizon problem. The binary u_k only appears in
///   dtg_min * u_k <= dtg_k <= dtg_max * u_k,
/// so its relaxation u_k in [0, 1] is exactly dtg_k in [0, dtg_max]; the
/// QP template therefore carries u_k implicitly through the two dtg bound
/// rows, whose right-hand sides `bounds_rhs` sets from an on/off pattern.
struct MiqpProblem {
  int horizon = 0;
  SystemConfig cfg;
  SystemState initial;
  HorizonWindow window;
  qp::QuadraticProgram relaxation;  // h encodes the all-Free pattern
  double objective_constant = 0.0;  // constant part of J (P0 smoothing term)

  [[nodiscard]] static int index(int step, Var v) {
    return step * kVarsPerStep + static_cast<int>(v);
  }
  [[nodiscard]] static int row(int step, Row r) {
    return step * kRowsPerStep + static_cast<int>(r);
  }
  [[nodiscard]] Eigen::VectorXd bounds_rhs(std::span<const OnOff> pattern) const;
};

MiqpProblem build_horizon_problem(const SystemState& state, const HorizonWindow& window,
                                  const SystemConfig& cfg);

struct BranchAndBoundSettings {
  double relative_gap = 1e-7;        // prune when bound >= incumbent - gap * (1 + |incumbent|)
  double integrality_tol = 1e-6;     // MW
  long max_nodes = 2'000'000;
  bool root_rounding = true;         // seed the incumbent by rounding the root relaxation
  qp::Settings qp;
};

struct PlanSolution {
  std::vector<Action> actions;       // finalized per-step actions
  std::vector<double> energy_mwh;    // E_1 .. E_H
  std::vector<bool> on;
  Eigen::VectorXd z;                 // raw QP vector of the incumbent
  double objective = 0.0;            // J evaluated on the plan
  double bound_gap = 0.0;            // certified absolute gap
  long nodes = 0;
  long qp_failures = 0;              // relaxations that hit the iteration limit
  double solve_seconds = 0.0;
};

/// Depth-first branch and bound on the generator binaries: branch on the
/// most fractional relaxed indicator (dtg_k / dtg_min closest to 1/2),
/// explore the "on" child first. Equal-objective plans are resolved towards
/// the lexicographically smallest generator vector among the leaves visited.
/// `start_patterns` are on/off schedules evaluated before the search to seed
/// the incumbent; they change the node count, not the optimal value.
/// Throws std::runtime_error when no feasible plan exists.
PlanSolution solve_miqp(const MiqpProblem& p, const BranchAndBoundSettings& settings = {},
                        std::span<const std::vector<bool>> start_patterns = {});

/// Objective J of a plan given as per-step generator power, storage power
/// (positive = charging) and the terminal energy.
double evaluate_objective(std::span<const double> dtg_mw, std::span<const double> ess_mw,
                          double terminal_energy_mwh, const SystemState& state,
                          const SystemConfig& cfg);

/// First action of the optimal plan.
Action mpc_policy(const SystemState& state, const HorizonWindow& window, const SystemConfig& cfg);

/// A control policy: maps the current state and the next-H exogenous window
/// to an action. `step` is the index of the current time step within the
/// scenario, for policies that keep their own view of the scenario.
using Policy =
    std::function<Action(const SystemState& state, const HorizonWindow& window, std::size_t step)>;

/// MPC policy for one sequential rollout: each solve is seeded with the
/// previous plan shifted by one step. Use one instance per rollout.
Policy make_mpc_policy(const SystemConfig& cfg);

/// Default initial condition: storage half full, generator off.
SystemState default_initial_state(const SystemConfig& cfg);

/// Window of `horizon` values starting at `start`, holding the last value
/// past the end of the series.
std::vector<double> padded_window(std::span<const double> series, std::size_t start,
                                  std::size_t horizon);

/// Applies `policy` for `steps` steps (0 = whole series). Every action is
/// checked against the action invariants; a violation throws
/// std::runtime_error. Throws std::invalid_argument for an invalid config or
/// a load the generator alone cannot cover.
Trajectory rollout(const Policy& policy, std::span<const double> rps_mw,
                   std::span<const double> load_mw, const SystemConfig& cfg,
                   const SystemState& initial, std::size_t steps = 0);

}  // namespace hybridsize::mpc
