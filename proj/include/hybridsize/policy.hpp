#pragma once

// Feasibility projection of raw network outputs, the robustness metric, the
// alpha-quantile scenario policy, and policy adapters for rollouts.

#include "hybridsize/core.hpp"
#include "hybridsize/mpc.hpp"
#include "hybridsize/neural.hpp"
#include "hybridsize/scenarios.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace hybridsize::policy {

/// Network outputs before rescaling: generator power as a fraction of
/// dtg_max, storage power as a fraction of the C-rate power of the global
/// storage capacity.
struct RawAction {
  double dtg_frac = 0.0;  // [0, 1]
  double ess_frac = 0.0;  // [-1, 1]
};

/// Balance slack below which the projection leaves a residual alone.
inline constexpr double kProjectionSlack = 1e-10;

/// Maps a proposed action onto the feasible set. The proposal's curtailment
/// is ignored. Steps, in order:
///   snap the generator (below dtg_min / 2 -> off, below dtg_min -> dtg_min),
///   clamp storage power to what the state of charge allows,
///   cover a deficit by discharging first, then by the generator,
///   use a surplus to cut back discharge, then curtail the rest.
/// Never discharges while curtailing. Throws std::runtime_error if the load
/// exceeds what full discharge plus dtg_max can supply.
Action project_action(const Action& proposal, const SystemState& state, double rps_mw,
                      double load_mw, const SystemConfig& cfg);
Action project_action(const RawAction& raw, const SystemState& state, double rps_mw,
                      double load_mw, const SystemConfig& cfg);

/// Power committed now, dtg + ess (signed). Larger is more cautious.
double robustness_metric(const Action& a);

/// Index into `actions` at quantile floor(alpha (N - 1)) of the order by
/// robustness metric, ties broken by lower dtg, then lower ess. Throws
/// std::invalid_argument for an empty list or alpha outside [0, 1].
std::size_t select_quantile(std::span<const Action> actions, double alpha);

struct StochasticPolicyConfig {
  int n_scenarios = 64;
  double alpha = 0.6;
  double sigma_ms = 0.5;

  /// Throws std::invalid_argument unless n >= 1, alpha in [0, 1], sigma >= 0.
  void validate() const;
};

/// Evaluates one policy on many windows sharing the same state.
using BatchPolicy =
    std::function<std::vector<Action>(const SystemState& state, std::span<const HorizonWindow>)>;

/// Exact MPC applied to each window in turn.
BatchPolicy mpc_batch(const SystemConfig& cfg);

/// Neural policy on a batch of windows, each output projected.
BatchPolicy neural_batch(const neural::PolicyModel& model, const SystemConfig& cfg);

struct StochasticDecision {
  std::vector<Action> candidates;  // one per scenario
  std::size_t chosen = 0;
  Action action;
};

/// Samples wind scenarios around `forecast_wind_ms`, evaluates `base` on
/// every distinct scenario and returns the alpha-quantile candidate unchanged.
StochasticDecision stochastic_decide(const SystemState& state,
                                     std::span<const double> forecast_wind_ms,
                                     std::span<const double> load_mw, const BatchPolicy& base,
                                     const StochasticPolicyConfig& spc, std::uint64_t seed,
                                     const SystemConfig& cfg,
                                     const scenarios::PowerCurve& curve);

Action stochastic_policy(const SystemState& state, std::span<const double> forecast_wind_ms,
                         std::span<const double> load_mw, const BatchPolicy& base,
                         const StochasticPolicyConfig& spc, std::uint64_t seed,
                         const SystemConfig& cfg, const scenarios::PowerCurve& curve);

/// Rollout adapter for the neural policy (projected).
mpc::Policy make_neural_policy(const neural::PolicyModel& model, const SystemConfig& cfg);

/// Rollout adapter for the stochastic policy. It reads forecast wind speeds
/// from `wind_ms` at the rollout step (holding the last value past the end)
/// and seeds step k's scenarios with derive_seed(seed, k).
mpc::Policy make_stochastic_policy(BatchPolicy base, std::vector<double> wind_ms,
                                   const StochasticPolicyConfig& spc, std::uint64_t seed,
                                   const SystemConfig& cfg, const scenarios::PowerCurve& curve);

}  // namespace hybridsize::policy
