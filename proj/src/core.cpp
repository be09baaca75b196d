#include "hybridsize/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hybridsize {

namespace {

constexpr double kCRateHours = 1.0;

void require(std::vector<ConfigViolation>& out, bool ok, const char* field,
             const std::string& message) {
  if (!ok) out.push_back({field, message});
}

bool finite_all(const SystemConfig& c) {
  for (double v : {c.dt_hours, c.dtg_min_mw, c.dtg_max_mw, c.ess_capacity_mwh,
                   c.ess_power_max_mw, c.eta_charge, c.eta_discharge, c.rps_capacity_mw,
                   c.global_ess_capacity_mwh, c.global_rps_capacity_mw,
                   c.weights.dtg_usage, c.weights.dtg_smooth, c.weights.ess_smooth,
                   c.weights.ess_terminal}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

double c_rate_power_mw(double ess_capacity_mwh) { return ess_capacity_mwh / kCRateHours; }

SystemConfig SystemConfig::with_capacities(double ess_mwh, double rps_mw) const {
  SystemConfig out = *this;
  out.ess_capacity_mwh = ess_mwh;
  out.ess_power_max_mw = c_rate_power_mw(ess_mwh);
  out.rps_capacity_mw = rps_mw;
  return out;
}

std::vector<ConfigViolation> validate_config(const SystemConfig& c) {
  std::vector<ConfigViolation> v;
  require(v, finite_all(c), "config", "all numeric fields must be finite");
  require(v, c.dt_hours > 0.0, "dt_hours", "must be > 0");
  require(v, c.horizon_steps >= 1, "horizon_steps", "must be >= 1");
  require(v, c.dtg_min_mw > 0.0, "dtg_min_mw", "must be > 0");
  require(v, c.dtg_min_mw <= c.dtg_max_mw, "dtg_max_mw", "must be >= dtg_min_mw");
  require(v, c.ess_capacity_mwh >= 0.0, "ess_capacity_mwh", "must be >= 0");
  require(v, c.ess_capacity_mwh <= c.global_ess_capacity_mwh, "ess_capacity_mwh",
          "must not exceed global_ess_capacity_mwh");
  require(v, c.rps_capacity_mw >= 0.0, "rps_capacity_mw", "must be >= 0");
  require(v, c.rps_capacity_mw <= c.global_rps_capacity_mw, "rps_capacity_mw",
          "must not exceed global_rps_capacity_mw");
  {
    const double expected = c_rate_power_mw(c.ess_capacity_mwh);
    std::ostringstream msg;
    msg << "must equal ess_capacity_mwh / 1 h (" << expected << " MW)";
    require(v, std::abs(c.ess_power_max_mw - expected) <= 1e-9 * (1.0 + expected),
            "ess_power_max_mw", msg.str());
  }
  require(v, c.eta_charge > 0.0 && c.eta_charge <= 1.0, "eta_charge", "must lie in (0, 1]");
  require(v, c.eta_discharge > 0.0 && c.eta_discharge <= 1.0, "eta_discharge",
          "must lie in (0, 1]");
  require(v, c.weights.dtg_usage >= 0.0, "weights.dtg_usage", "must be >= 0");
  require(v, c.weights.dtg_smooth >= 0.0, "weights.dtg_smooth", "must be >= 0");
  require(v, c.weights.ess_smooth >= 0.0, "weights.ess_smooth", "must be >= 0");
  require(v, c.weights.ess_terminal >= 0.0, "weights.ess_terminal", "must be >= 0");
  require(v, c.global_ess_capacity_mwh >= 0.0, "global_ess_capacity_mwh", "must be >= 0");
  require(v, c.global_rps_capacity_mw >= 0.0, "global_rps_capacity_mw", "must be >= 0");
  return v;
}

double balance_residual(const Action& a, double rps_mw, double load_mw) {
  return (-a.ess_mw + a.dtg_mw + rps_mw) - (load_mw + a.curtail_mw);
}

double step_storage(double energy_mwh, double ess_mw, const SystemConfig& cfg) {
  if (std::abs(ess_mw) > cfg.ess_power_max_mw + kFeasibilityTol) {
    std::ostringstream msg;
    msg << "step_storage: |ess_mw| = " << std::abs(ess_mw) << " exceeds power limit "
        << cfg.ess_power_max_mw;
    throw std::invalid_argument(msg.str());
  }
  const double plus = ess_mw > 0.0 ? ess_mw : 0.0;
  const double minus = ess_mw < 0.0 ? -ess_mw : 0.0;
  return energy_mwh + cfg.dt_hours * (cfg.eta_charge * plus - minus / cfg.eta_discharge);
}

double max_charge_mw(double energy_mwh, const SystemConfig& cfg) {
  const double headroom = (cfg.ess_capacity_mwh - energy_mwh) / (cfg.dt_hours * cfg.eta_charge);
  return std::max(0.0, std::min(cfg.ess_power_max_mw, headroom));
}

double max_discharge_mw(double energy_mwh, const SystemConfig& cfg) {
  const double available = energy_mwh * cfg.eta_discharge / cfg.dt_hours;
  return std::max(0.0, std::min(cfg.ess_power_max_mw, available));
}

std::vector<std::string> action_violations(const Action& a, const SystemState& state,
                                           double rps_mw, double load_mw,
                                           const SystemConfig& cfg, double tol) {
  std::vector<std::string> out;
  auto fail = [&](const std::string& what, double value) {
    std::ostringstream msg;
    msg << what << " (value " << value << ")";
    out.push_back(msg.str());
  };
  if (!std::isfinite(a.dtg_mw) || !std::isfinite(a.ess_mw) || !std::isfinite(a.curtail_mw)) {
    out.emplace_back("non-finite action component");
    return out;
  }
  const bool off = std::abs(a.dtg_mw) <= tol;
  const bool on = a.dtg_mw >= cfg.dtg_min_mw - tol && a.dtg_mw <= cfg.dtg_max_mw + tol;
  if (!off && !on) fail("dtg_mw outside {0} U [dtg_min, dtg_max]", a.dtg_mw);
  if (std::abs(a.ess_mw) > cfg.ess_power_max_mw + tol) fail("|ess_mw| above power limit", a.ess_mw);
  if (a.curtail_mw < -tol) fail("negative curtailment", a.curtail_mw);
  const double r = balance_residual(a, rps_mw, load_mw);
  if (std::abs(r) > tol) fail("power balance residual", r);
  const double plus = std::max(a.ess_mw, 0.0);
  const double minus = std::max(-a.ess_mw, 0.0);
  const double next = state.ess_energy_mwh +
                      cfg.dt_hours * (cfg.eta_charge * plus - minus / cfg.eta_discharge);
  if (next < -tol) fail("storage energy below zero after step", next);
  if (next > cfg.ess_capacity_mwh + tol) fail("storage energy above capacity after step", next);
  return out;
}

double average_dtg_usage(const Trajectory& t) {
  if (t.steps.empty()) throw std::invalid_argument("average_dtg_usage: empty trajectory");
  double sum = 0.0;
  for (const auto& s : t.steps) sum += s.action.dtg_mw;
  return sum / static_cast<double>(t.steps.size());
}

}  // namespace hybridsize
