#pragma once

// Domain types and the storage / power-balance arithmetic shared by every
// module. Units: MW for power, MWh for energy, hours for time. Storage power
// is positive when charging.

#include <cstddef>
#include <string>
#include <vector>

namespace hybridsize {

struct ObjectiveWeights {
  double dtg_usage = 1.0;
  double dtg_smooth = 0.6;
  double ess_smooth = 2e-3;
  double ess_terminal = 1e-2;
};

/// Physical limits, efficiencies and objective weights for one system
/// instance. Defaults describe the offshore case: a 40 MW gas turbine with a
/// 35 % minimum load, a 96 %/96 % battery with a one-hour C-rate, and
/// 10-minute steps over a six-hour horizon.
struct SystemConfig {
  double dt_hours = 1.0 / 6.0;
  int horizon_steps = 36;
  double dtg_min_mw = 0.35 * 40.0;
  double dtg_max_mw = 40.0;
  double ess_capacity_mwh = 80.0;
  double ess_power_max_mw = 80.0;
  double eta_charge = 0.96;
  double eta_discharge = 0.96;
  double rps_capacity_mw = 150.0;
  ObjectiveWeights weights;
  double global_ess_capacity_mwh = 80.0;
  double global_rps_capacity_mw = 150.0;

  /// Copy with storage and renewable capacities replaced. Storage power
  /// follows the one-hour C-rate.
  [[nodiscard]] SystemConfig with_capacities(double ess_mwh, double rps_mw) const;
};

/// Storage power limit implied by a one-hour C-rate.
double c_rate_power_mw(double ess_capacity_mwh);

struct ConfigViolation {
  std::string field;
  std::string message;
};

/// Every invariant of `cfg` that does not hold. Empty means valid.
std::vector<ConfigViolation> validate_config(const SystemConfig& cfg);

struct SystemState {
  double ess_energy_mwh = 0.0;
  double prev_dtg_mw = 0.0;
};

struct HorizonWindow {
  std::vector<double> rps_mw;
  std::vector<double> load_mw;

  [[nodiscard]] std::size_t size() const { return rps_mw.size(); }
};

struct Action {
  double dtg_mw = 0.0;
  double ess_mw = 0.0;
  double curtail_mw = 0.0;
};

/// (-ess + dtg + rps) - (load + curtail). Zero when the step is balanced.
double balance_residual(const Action& a, double rps_mw, double load_mw);

/// Storage energy after one step of `ess_mw`. No clamping: callers enforce
/// the energy bounds. Throws std::invalid_argument if |ess_mw| exceeds the
/// storage power limit (beyond a 1e-9 MW slack).
double step_storage(double energy_mwh, double ess_mw, const SystemConfig& cfg);

/// Largest charging power that keeps the energy within capacity this step.
double max_charge_mw(double energy_mwh, const SystemConfig& cfg);
/// Largest discharging power (positive number) that keeps energy >= 0.
double max_discharge_mw(double energy_mwh, const SystemConfig& cfg);

/// Tolerance used when checking action feasibility.
inline constexpr double kFeasibilityTol = 1e-9;

/// Describes every way `a` violates the action invariants for the given
/// state and exogenous values; empty when feasible within `tol`.
std::vector<std::string> action_violations(const Action& a, const SystemState& state,
                                           double rps_mw, double load_mw,
                                           const SystemConfig& cfg,
                                           double tol = kFeasibilityTol);

struct TrajectoryStep {
  Action action;
  SystemState state;  // state before the action is applied
  double rps_mw = 0.0;
  double load_mw = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  SystemState final_state;
};

/// Arithmetic mean of the generator power over the trajectory. Throws on an
/// empty trajectory.
double average_dtg_usage(const Trajectory& t);

}  // namespace hybridsize
