#include "hybridsize/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace hybridsize::policy {

namespace {

double finite_or_zero(double v) { return std::isfinite(v) ? v : 0.0; }

double residual(double ess, double dtg, double rps, double load) {
  return (-ess + dtg + rps) - load;
}

}  // namespace

Action project_action(const Action& proposal, const SystemState& state, double rps_mw,
                      double load_mw, const SystemConfig& cfg) {
  double dtg = std::clamp(finite_or_zero(proposal.dtg_mw), 0.0, cfg.dtg_max_mw);
  if (dtg < 0.5 * cfg.dtg_min_mw) {
    dtg = 0.0;
  } else if (dtg < cfg.dtg_min_mw) {
    dtg = cfg.dtg_min_mw;
  }
  const double charge_limit = max_charge_mw(state.ess_energy_mwh, cfg);
  const double discharge_limit = max_discharge_mw(state.ess_energy_mwh, cfg);
  double ess = std::clamp(finite_or_zero(proposal.ess_mw), -discharge_limit, charge_limit);

  double r = residual(ess, dtg, rps_mw, load_mw);
  if (r < -kProjectionSlack) {
    const double discharged = std::max(ess + r, -discharge_limit);
    if (discharged < ess) ess = discharged;
    r = residual(ess, dtg, rps_mw, load_mw);
    if (r < -kProjectionSlack) {
      dtg = dtg == 0.0 ? std::max(cfg.dtg_min_mw, -r) : dtg - r;
      dtg = std::min(dtg, cfg.dtg_max_mw);
      r = residual(ess, dtg, rps_mw, load_mw);
      if (r < -kProjectionSlack) {
        std::ostringstream msg;
        msg << "project_action: load " << load_mw << " MW exceeds full discharge plus dtg_max ("
            << r << " MW short)";
        throw std::runtime_error(msg.str());
      }
    }
  }
  if (r > kProjectionSlack && ess < 0.0) {
    ess = std::min(0.0, ess + r);
    r = residual(ess, dtg, rps_mw, load_mw);
  }
  const double curtail = ess < 0.0 ? 0.0 : std::max(0.0, r);
  return {dtg, ess, curtail};
}

Action project_action(const RawAction& raw, const SystemState& state, double rps_mw,
                      double load_mw, const SystemConfig& cfg) {
  const double dtg_frac = std::clamp(finite_or_zero(raw.dtg_frac), 0.0, 1.0);
  const double ess_frac = std::clamp(finite_or_zero(raw.ess_frac), -1.0, 1.0);
  return project_action(Action{dtg_frac * cfg.dtg_max_mw,
                               ess_frac * c_rate_power_mw(cfg.global_ess_capacity_mwh), 0.0},
                        state, rps_mw, load_mw, cfg);
}

double robustness_metric(const Action& a) { return a.dtg_mw + a.ess_mw; }

std::size_t select_quantile(std::span<const Action> actions, double alpha) {
  if (actions.empty()) throw std::invalid_argument("select_quantile: no actions");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  std::vector<std::size_t> order(actions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    const double ri = robustness_metric(actions[i]), rj = robustness_metric(actions[j]);
    if (ri != rj) return ri < rj;
    if (actions[i].dtg_mw != actions[j].dtg_mw) return actions[i].dtg_mw < actions[j].dtg_mw;
    return actions[i].ess_mw < actions[j].ess_mw;
  });
  const auto k = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(actions.size() - 1)));
  return order[k];
}

void StochasticPolicyConfig::validate() const {
  if (n_scenarios < 1) throw std::invalid_argument("n_scenarios must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(sigma_ms >= 0.0)) throw std::invalid_argument("sigma_ms must be >= 0");
}

BatchPolicy mpc_batch(const SystemConfig& cfg) {
  return [cfg](const SystemState& state, std::span<const HorizonWindow> windows) {
    std::vector<Action> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(mpc::mpc_policy(state, w, cfg));
    return out;
  };
}

BatchPolicy neural_batch(const neural::PolicyModel& model, const SystemConfig& cfg) {
  const int H = model.net.architecture().horizon;
  if (cfg.horizon_steps != H) {
    throw std::invalid_argument("network horizon does not match the system horizon");
  }
  // Rescale from the model's output units to the projection's.
  const double ess_ratio = model.scaling.ess_power_mw /
                           std::max(c_rate_power_mw(cfg.global_ess_capacity_mwh), 1e-300);
  const double dtg_ratio = model.scaling.dtg_mw / cfg.dtg_max_mw;
  return [model, cfg, H, ess_ratio, dtg_ratio](const SystemState& state,
                                               std::span<const HorizonWindow> windows) {
    const auto B = windows.size();
    std::vector<float> series(B * neural::kSeriesChannels * static_cast<std::size_t>(H));
    std::vector<float> cond(B * neural::kCondScalars);
    std::vector<float> out(B * neural::kOutputs);
    for (std::size_t b = 0; b < B; ++b) {
      if (windows[b].size() != static_cast<std::size_t>(H)) {
        throw std::invalid_argument("window length does not match the network horizon");
      }
      const auto f = neural::encode_features(state, windows[b], cfg, model.scaling);
      std::copy(f.series.begin(), f.series.end(), series.begin() + static_cast<std::ptrdiff_t>(b * f.series.size()));
      std::copy(f.cond.begin(), f.cond.end(), cond.begin() + static_cast<std::ptrdiff_t>(b * neural::kCondScalars));
    }
    std::vector<Action> actions;
    if (B == 0) return actions;
    model.net.forward(series, cond, static_cast<int>(B), out);
    actions.reserve(B);
    for (std::size_t b = 0; b < B; ++b) {
      const RawAction raw{out[2 * b + 1] * dtg_ratio, out[2 * b] * ess_ratio};
      actions.push_back(project_action(raw, state, windows[b].rps_mw.front(),
                                       windows[b].load_mw.front(), cfg));
    }
    return actions;
  };
}

StochasticDecision stochastic_decide(const SystemState& state,
                                     std::span<const double> forecast_wind_ms,
                                     std::span<const double> load_mw, const BatchPolicy& base,
                                     const StochasticPolicyConfig& spc, std::uint64_t seed,
                                     const SystemConfig& cfg,
                                     const scenarios::PowerCurve& curve) {
  spc.validate();
  const auto set = scenarios::sample_forecast_scenarios(
      forecast_wind_ms, load_mw, static_cast<std::size_t>(spc.n_scenarios), spc.sigma_ms, seed,
      cfg.rps_capacity_mw, curve);
  // Identical scenarios (zero sigma, calm wind) are evaluated once.
  std::vector<HorizonWindow> windows;
  std::vector<std::size_t> slot(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::size_t j = 0;
    while (j < windows.size() && windows[j].rps_mw != set.rps_mw[i]) ++j;
    if (j == windows.size()) windows.push_back({set.rps_mw[i], set.load_mw});
    slot[i] = j;
  }
  const auto unique = base(state, windows);
  if (unique.size() != windows.size()) {
    throw std::runtime_error("base policy returned the wrong number of actions");
  }
  StochasticDecision d;
  d.candidates.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) d.candidates.push_back(unique[slot[i]]);
  d.chosen = select_quantile(d.candidates, spc.alpha);
  d.action = d.candidates[d.chosen];
  return d;
}

Action stochastic_policy(const SystemState& state, std::span<const double> forecast_wind_ms,
                         std::span<const double> load_mw, const BatchPolicy& base,
                         const StochasticPolicyConfig& spc, std::uint64_t seed,
                         const SystemConfig& cfg, const scenarios::PowerCurve& curve) {
  return stochastic_decide(state, forecast_wind_ms, load_mw, base, spc, seed, cfg, curve).action;
}

mpc::Policy make_neural_policy(const neural::PolicyModel& model, const SystemConfig& cfg) {
  auto batch = neural_batch(model, cfg);
  return [batch](const SystemState& state, const HorizonWindow& window, std::size_t) {
    return batch(state, std::span<const HorizonWindow>(&window, 1)).front();
  };
}

mpc::Policy make_stochastic_policy(BatchPolicy base, std::vector<double> wind_ms,
                                   const StochasticPolicyConfig& spc, std::uint64_t seed,
                                   const SystemConfig& cfg, const scenarios::PowerCurve& curve) {
  spc.validate();
  if (wind_ms.empty()) throw std::invalid_argument("stochastic policy needs a wind series");
  return [base = std::move(base), wind = std::move(wind_ms), spc, seed, cfg, curve](
             const SystemState& state, const HorizonWindow& window, std::size_t step) {
    const auto forecast = mpc::padded_window(wind, step, window.size());
    return stochastic_policy(state, forecast, window.load_mw, base, spc,
                             scenarios::derive_seed(seed, step), cfg, curve);
  };
}

}  // namespace hybridsize::policy
