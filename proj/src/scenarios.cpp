#include "hybridsize/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace hybridsize::scenarios {

PowerCurve PowerCurve::cubic_through(double cut_in_ms, double rated_ms, double cut_out_ms) {
  PowerCurve c;
  c.cut_in_ms = cut_in_ms;
  c.rated_ms = rated_ms;
  c.cut_out_ms = cut_out_ms;
  const double span = rated_ms * rated_ms * rated_ms - cut_in_ms * cut_in_ms * cut_in_ms;
  c.a3 = 1.0 / span;
  c.a0 = -cut_in_ms * cut_in_ms * cut_in_ms / span;
  return c;
}

PowerCurve default_power_curve() { return PowerCurve::cubic_through(3.0, 10.6, 25.0); }

void validate(const PowerCurve& curve) {
  if (!(curve.cut_in_ms < curve.rated_ms && curve.rated_ms < curve.cut_out_ms)) {
    throw std::invalid_argument("power curve needs cut_in < rated < cut_out");
  }
  if (!(curve.rated_power_fraction > 0.0 && curve.rated_power_fraction <= 1.0)) {
    throw std::invalid_argument("rated_power_fraction must lie in (0, 1]");
  }
}

double wind_speed_to_power(double v_ms, double capacity_mw, const PowerCurve& curve) {
  if (!(v_ms >= curve.cut_in_ms) || v_ms > curve.cut_out_ms) return 0.0;
  if (v_ms >= curve.rated_ms) return capacity_mw * curve.rated_power_fraction;
  const double f = ((curve.a3 * v_ms + curve.a2) * v_ms + curve.a1) * v_ms + curve.a0;
  return capacity_mw * std::clamp(f, 0.0, 1.0);
}

std::vector<double> wind_to_power(std::span<const double> v_ms, double capacity_mw,
                                  const PowerCurve& curve) {
  std::vector<double> out(v_ms.size());
  for (std::size_t i = 0; i < v_ms.size(); ++i) {
    out[i] = wind_speed_to_power(v_ms[i], capacity_mw, curve);
  }
  return out;
}

namespace {

// Exact discretization of dx = -theta x dt + sigma dW with stationary std s.
struct OuStep {
  double decay;
  double noise;
};

OuStep ou_step(double reversion_per_hour, double stationary_std, double dt_hours) {
  const double decay = std::exp(-reversion_per_hour * dt_hours);
  return {decay, stationary_std * std::sqrt(1.0 - decay * decay)};
}

}  // namespace

std::vector<double> synth_wind_speed(std::uint64_t seed, std::size_t n_steps,
                                     const WindParams& params) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const auto step = ou_step(params.reversion_per_hour, params.stationary_std_ms, params.dt_hours);
  std::vector<double> out(n_steps);
  double x = params.stationary_std_ms * normal(rng);
  for (std::size_t t = 0; t < n_steps; ++t) {
    out[t] = std::max(0.0, params.mean_ms + x);
    x = step.decay * x + step.noise * normal(rng);
  }
  return out;
}

std::vector<double> synth_load(std::uint64_t seed, std::size_t n_steps, const LoadParams& params) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  const auto step = ou_step(params.reversion_per_hour, params.stationary_std_mw, params.dt_hours);
  const double phase = phase_dist(rng);
  std::vector<double> out(n_steps);
  double x = params.stationary_std_mw * normal(rng);
  for (std::size_t t = 0; t < n_steps; ++t) {
    const double hours = static_cast<double>(t) * params.dt_hours;
    const double diurnal =
        params.diurnal_amplitude_mw * std::sin(2.0 * std::numbers::pi * hours / 24.0 + phase);
    out[t] = std::clamp(params.mean_mw + diurnal + x, params.min_mw, params.max_mw);
    x = step.decay * x + step.noise * normal(rng);
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Scenario synth_scenario(std::uint64_t seed, std::size_t n_steps, const WindParams& wind,
                        const LoadParams& load) {
  return {synth_wind_speed(derive_seed(seed, 0), n_steps, wind),
          synth_load(derive_seed(seed, 1), n_steps, load)};
}

ScenarioSet sample_forecast_scenarios(std::span<const double> history_ms,
                                      std::span<const double> load_mw, std::size_t n,
                                      double sigma_ms, std::uint64_t seed, double capacity_mw,
                                      const PowerCurve& curve) {
  if (n < 1) throw std::invalid_argument("need at least one scenario");
  if (!(sigma_ms >= 0.0)) throw std::invalid_argument("sigma must be nonnegative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  ScenarioSet set;
  set.load_mw.assign(load_mw.begin(), load_mw.end());
  set.wind_ms.resize(n);
  set.rps_mw.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& w = set.wind_ms[i];
    w.resize(history_ms.size());
    double walk = 0.0;
    for (std::size_t k = 0; k < history_ms.size(); ++k) {
      if (k > 0) walk += sigma_ms * normal(rng);
      w[k] = std::max(0.0, history_ms[k] + walk);
    }
    set.rps_mw[i] = wind_to_power(w, capacity_mw, curve);
  }
  return set;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v)) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": cannot parse '" + s +
                             "' as a number");
  }
  return v;
}

}  // namespace

std::vector<double> load_timeseries_csv(const std::filesystem::path& path,
                                        const std::string& column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  const auto header = split_csv_line(line);
  const auto find = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw std::runtime_error(path.string() + ": missing column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t step_col = find("step");
  const std::size_t value_col = find(column);

  std::vector<double> values;
  double prev_step = -std::numeric_limits<double>::infinity();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected " + std::to_string(header.size()) + " fields");
    }
    const double step = parse_number(cells[step_col], path, line_no);
    if (!(step > prev_step)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": steps must be strictly increasing");
    }
    prev_step = step;
    values.push_back(parse_number(cells[value_col], path, line_no));
  }
  return values;
}

void write_timeseries_csv(const std::filesystem::path& path, std::span<const double> values,
                          const std::string& column) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step," << column << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < values.size(); ++i) out << i << ',' << values[i] << '\n';
  if (!out) throw std::runtime_error("error writing " + path.string());
}

std::vector<double> resample(std::span<const double> series, double from_dt_hours,
                             double to_dt_hours) {
  if (!(from_dt_hours > 0.0 && to_dt_hours > 0.0)) {
    throw std::invalid_argument("sampling intervals must be positive");
  }
  if (series.empty()) return {};
  const double ratio = from_dt_hours >= to_dt_hours ? from_dt_hours / to_dt_hours
                                                    : to_dt_hours / from_dt_hours;
  const auto factor = static_cast<std::size_t>(std::llround(ratio));
  if (factor == 0 || std::abs(ratio - static_cast<double>(factor)) > 1e-9 * ratio) {
    throw std::invalid_argument("resampling needs an integer ratio between intervals");
  }
  if (factor == 1) return {series.begin(), series.end()};
  std::vector<double> out;
  if (from_dt_hours > to_dt_hours) {
    out.resize(series.size() * factor);
    for (std::size_t j = 0; j < out.size(); ++j) {
      const std::size_t i = j / factor;
      const double t = static_cast<double>(j % factor) / static_cast<double>(factor);
      const double next = i + 1 < series.size() ? series[i + 1] : series[i];
      out[j] = (1.0 - t) * series[i] + t * next;
    }
  } else {
    out.resize(series.size() / factor);
    for (std::size_t j = 0; j < out.size(); ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < factor; ++i) sum += series[j * factor + i];
      out[j] = sum / static_cast<double>(factor);
    }
  }
  return out;
}

}  // namespace hybridsize::scenarios
