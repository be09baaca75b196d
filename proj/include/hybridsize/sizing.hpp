#pragma once

// Capacity sizing: generator-usage estimates over a capacity grid, the affine
// investment cost model, and budget-constrained optimal capacities.

#include "hybridsize/core.hpp"
#include "hybridsize/mpc.hpp"
#include "hybridsize/neural.hpp"
#include "hybridsize/policy.hpp"
#include "hybridsize/scenarios.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace hybridsize::sizing {

/// Costs in M EUR. A fixed cost is paid only for a component with nonzero
/// capacity.
struct CostModel {
  double a_ess = 0.6;   // per MWh
  double b_ess = 20.0;
  double a_rps = 5.0;   // per MW
  double b_rps = 35.0;

  /// Throws std::invalid_argument for a negative or non-finite coefficient.
  void validate() const;
};

/// Throws std::invalid_argument for a negative capacity.
double investment_cost(double ess_mwh, double rps_mw, const CostModel& m);

/// Builds a fresh policy for one rollout. `cfg` carries the capacities under
/// test; `seed` is distinct per rollout.
using PolicyFactory = std::function<mpc::Policy(const SystemConfig& cfg,
                                                const scenarios::Scenario& scenario,
                                                std::uint64_t seed)>;

PolicyFactory mpc_factory();
PolicyFactory neural_factory(neural::PolicyModel model);
/// Stochastic policy over the neural base policy.
PolicyFactory stochastic_neural_factory(neural::PolicyModel model,
                                        policy::StochasticPolicyConfig spc,
                                        scenarios::PowerCurve curve);
/// Stochastic policy over exact MPC (slow; for small studies).
PolicyFactory stochastic_mpc_factory(policy::StochasticPolicyConfig spc,
                                     scenarios::PowerCurve curve);

struct Estimate {
  double g_mw = 0.0;
  double stderr_mw = 0.0;  // sample standard deviation / sqrt(n), 0 for n = 1
};

struct EstimateOptions {
  int n_scenarios = 32;
  std::uint64_t seed = 0;
  int threads = 1;
  scenarios::PowerCurve curve = scenarios::default_power_curve();
};

/// Index into the pool of rollout i. The same (seed, i) gives the same
/// scenario for every capacity pair.
std::size_t scenario_index(std::uint64_t seed, std::size_t i, std::size_t pool_size);

/// Per-rollout average generator usage, in rollout order. Rollout i runs
/// the whole pool scenario from default_initial_state with policy seed
/// derive_seed(seed, i + 1).
std::vector<double> rollout_usages(double ess_mwh, double rps_mw, const PolicyFactory& factory,
                                   std::span<const scenarios::Scenario> pool,
                                   const SystemConfig& cfg, const EstimateOptions& opt);

Estimate estimate_G(double ess_mwh, double rps_mw, const PolicyFactory& factory,
                    std::span<const scenarios::Scenario> pool, const SystemConfig& cfg,
                    const EstimateOptions& opt);

struct SizingGrid {
  std::vector<double> ess_axis;   // MWh
  std::vector<double> rps_axis;   // MW
  std::vector<double> g_mw;       // ess-major: cell (i, j) at i * rps_axis.size() + j
  std::vector<double> stderr_mw;
  int n_scenarios = 0;
  std::string policy_id;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t cell(std::size_t i, std::size_t j) const {
    return i * rps_axis.size() + j;
  }
  [[nodiscard]] double g(std::size_t i, std::size_t j) const { return g_mw[cell(i, j)]; }
};

/// Nine storage and nine renewable capacities from zero up to the global
/// maxima, denser near zero.
std::vector<double> default_ess_axis(const SystemConfig& cfg);
std::vector<double> default_rps_axis(const SystemConfig& cfg);

/// Every cell uses the same scenarios and policy seeds. Throws
/// std::invalid_argument for an empty axis or a capacity outside
/// [0, global maximum].
SizingGrid grid_search(std::span<const double> ess_axis, std::span<const double> rps_axis,
                       const PolicyFactory& factory, const std::string& policy_id,
                       std::span<const scenarios::Scenario> pool, const SystemConfig& cfg,
                       const EstimateOptions& opt);

struct BudgetPoint {
  double budget = 0.0;
  bool feasible = false;
  double g_mw = 0.0;
  double stderr_mw = 0.0;
  double ess_mwh = 0.0;
  double rps_mw = 0.0;
  double cost = 0.0;
};

/// Lowest G among cells costing at most each budget. Ties go to the lower
/// cost, then the lower storage capacity. A budget no cell fits is marked
/// infeasible. Throws std::invalid_argument unless budgets ascend.
std::vector<BudgetPoint> usage_per_cost(const SizingGrid& grid, const CostModel& m,
                                        std::span<const double> budgets);

/// usage_per_cost at every distinct cell cost, keeping the points where the
/// chosen capacities change. The first point is the cheapest cell.
std::vector<BudgetPoint> optimal_frontier(const SizingGrid& grid, const CostModel& m);

/// Cell rows: ess_mwh,rps_mw,g_mw,stderr_mw.
void write_grid_csv(const std::filesystem::path& path, const SizingGrid& grid);
/// Rebuilds the axes from the rows, which must cover the full grid. Policy
/// id, seed and scenario count are not stored in the CSV.
SizingGrid read_grid_csv(const std::filesystem::path& path);

void write_budget_csv(const std::filesystem::path& path, std::span<const BudgetPoint> points);
void write_budget_json(const std::filesystem::path& path, std::span<const BudgetPoint> points);

}  // namespace hybridsize::sizing
