#pragma once

// JSON run configuration shared by every pipeline stage.

#include "hybridsize/core.hpp"
#include "hybridsize/neural.hpp"
#include "hybridsize/policy.hpp"
#include "hybridsize/scenarios.hpp"
#include "hybridsize/sizing.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace hybridsize::cli {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScenarioSection {
  std::size_t steps = 576;  // four days of 10-minute steps
  int count = 32;
  scenarios::WindParams wind;
  scenarios::LoadParams load;
  scenarios::PowerCurve curve = scenarios::default_power_curve();
  // Measured series to cut into scenarios instead of synthesizing them.
  std::string wind_csv;
  std::string load_csv;
  std::string wind_column = "value";
  std::string load_column = "value";
  double source_dt_hours = 0.0;  // 0: same interval as the system
};

struct DatasetSection {
  std::size_t samples = 20000;
  std::size_t pool_steps = 52560;  // one year of 10-minute steps
  double prob_prev_off = 0.5;
  double nominal_load_mw = 40.0;
};

struct EvalSection {
  int scenarios = 10;
  std::size_t steps = 0;  // 0: whole scenario
};

struct SweepSection {
  std::vector<double> alphas = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  int scenarios = 8;
  std::string base = "neural";  // neural | mpc
};

struct GridSection {
  std::vector<double> ess_axis;  // empty: default axis
  std::vector<double> rps_axis;
  int n_scenarios = 32;
  std::string policy = "neural";  // neural | mpc | stochastic
};

struct FrontierSection {
  double budget_max = 900.0;
  double budget_step = 5.0;
};

// File names, relative to the output directory unless absolute.
struct PathSection {
  std::string scenarios = "scenarios.csv";
  std::string dataset = "dataset.bin";
  std::string weights = "weights.bin";
  std::string grid = "grid.csv";
};

struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 0;  // 0: HYBRIDSIZE_THREADS or hardware concurrency
  SystemConfig system;
  ScenarioSection scenarios;
  DatasetSection dataset;
  neural::Architecture network;
  neural::TrainConfig train;
  policy::StochasticPolicyConfig stochastic;
  EvalSection eval;
  SweepSection sweep;
  sizing::CostModel costs;
  GridSection grid;
  FrontierSection frontier;
  PathSection paths;

  /// Derived fields (network horizon, storage power, series intervals) are
  /// filled in by resolve(). Throws ConfigError on an invalid value.
  void resolve();
};

/// Throws ConfigError naming the offending key for an unknown key, a wrong
/// type or an invalid value. The result is resolved.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace hybridsize::cli
