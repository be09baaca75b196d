#pragma once

// Exogenous data: wind turbine power curve, synthetic wind-speed and load
// generators, random-walk forecast scenarios, and CSV ingestion/resampling.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hybridsize::scenarios {

/// Normalized turbine output P(v) = a3 v^3 + a2 v^2 + a1 v + a0 (fraction of
/// capacity) between cut-in and rated speed, constant above rated, zero
/// below cut-in and above cut-out.
struct PowerCurve {
  double a3 = 0.0;
  double a2 = 0.0;
  double a1 = 0.0;
  double a0 = 0.0;
  double cut_in_ms = 3.0;
  double rated_ms = 10.6;
  double cut_out_ms = 25.0;
  double rated_power_fraction = 1.0;

  /// Pure cubic through P(cut_in) = 0 and P(rated) = 1. The coefficients are
  /// placeholders for a specific turbine's fit.
  static PowerCurve cubic_through(double cut_in_ms, double rated_ms, double cut_out_ms);
};

PowerCurve default_power_curve();

/// Throws std::invalid_argument unless cut_in < rated < cut_out and the
/// rated fraction lies in (0, 1].
void validate(const PowerCurve& curve);

double wind_speed_to_power(double v_ms, double capacity_mw, const PowerCurve& curve);
std::vector<double> wind_to_power(std::span<const double> v_ms, double capacity_mw,
                                  const PowerCurve& curve);

/// Mean-reverting wind speed, discretized Ornstein-Uhlenbeck, clipped at 0.
struct WindParams {
  double mean_ms = 10.0;
  double reversion_per_hour = 0.05;
  double stationary_std_ms = 4.0;  // 0 gives a constant series
  double dt_hours = 1.0 / 6.0;
};

/// Load: mean + diurnal sinusoid + mean-reverting fluctuation, clipped to
/// [min_mw, max_mw].
struct LoadParams {
  double mean_mw = 30.0;
  double diurnal_amplitude_mw = 2.0;
  double reversion_per_hour = 0.5;
  double stationary_std_mw = 2.5;
  double min_mw = 15.0;
  double max_mw = 38.0;
  double dt_hours = 1.0 / 6.0;
};

std::vector<double> synth_wind_speed(std::uint64_t seed, std::size_t n_steps,
                                     const WindParams& params = {});
std::vector<double> synth_load(std::uint64_t seed, std::size_t n_steps,
                               const LoadParams& params = {});

/// One exogenous series pair; renewable power follows from the wind speed
/// and the installed capacity.
struct Scenario {
  std::vector<double> wind_ms;
  std::vector<double> load_mw;
};

Scenario synth_scenario(std::uint64_t seed, std::size_t n_steps, const WindParams& wind = {},
                        const LoadParams& load = {});

/// Independent stream seed for (seed, stream), via SplitMix64.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct ScenarioSet {
  std::vector<std::vector<double>> wind_ms;  // N x H
  std::vector<std::vector<double>> rps_mw;   // N x H
  std::vector<double> load_mw;               // shared, H

  [[nodiscard]] std::size_t size() const { return rps_mw.size(); }
};

/// Scenario i is the forecast wind speed plus a Gaussian random walk with
/// per-step standard deviation `sigma_ms`, started at zero so every scenario
/// shares the current wind speed, clipped at 0 and mapped through the curve.
ScenarioSet sample_forecast_scenarios(std::span<const double> history_ms,
                                      std::span<const double> load_mw, std::size_t n,
                                      double sigma_ms, std::uint64_t seed, double capacity_mw,
                                      const PowerCurve& curve);

/// Reads column `column` of a CSV with a header row and a strictly
/// increasing `step` column. Throws std::runtime_error on I/O or parse
/// failure, a missing column, or non-monotonic steps.
std::vector<double> load_timeseries_csv(const std::filesystem::path& path,
                                        const std::string& column = "value");
void write_timeseries_csv(const std::filesystem::path& path, std::span<const double> values,
                          const std::string& column = "value");

/// Changes the sampling interval: linear interpolation when refining (the
/// last sample is held past the end), block means when coarsening. The ratio
/// between the intervals must be an integer; an incomplete trailing block is
/// dropped.
std::vector<double> resample(std::span<const double> series, double from_dt_hours,
                             double to_dt_hours);

}  // namespace hybridsize::scenarios
