#include "hybridsize/core.hpp"

#include <gtest/gtest.h>

#include <random>

namespace hybridsize {
namespace {

TEST(ValidateConfig, DefaultOffshoreConfigIsValid) {
  const SystemConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.dtg_min_mw, 14.0);
  EXPECT_EQ(cfg.horizon_steps, 36);
  EXPECT_TRUE(validate_config(cfg).empty());
}

TEST(ValidateConfig, EfficiencyAboveOneIsReported) {
  SystemConfig cfg;
  cfg.eta_charge = 1.2;
  const auto v = validate_config(cfg);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].field, "eta_charge");
}

TEST(ValidateConfig, CRateTieIsEnforced) {
  SystemConfig cfg;
  cfg.ess_capacity_mwh = 80.0;
  cfg.ess_power_max_mw = 70.0;
  const auto v = validate_config(cfg);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].field, "ess_power_max_mw");
}

TEST(ValidateConfig, CapacitiesBeyondGlobalMaximaAreReported) {
  SystemConfig cfg = SystemConfig{}.with_capacities(100.0, 200.0);
  const auto v = validate_config(cfg);
  EXPECT_EQ(v.size(), 2u);
  cfg = SystemConfig{}.with_capacities(8.0, 0.0);
  EXPECT_TRUE(validate_config(cfg).empty());
  EXPECT_DOUBLE_EQ(cfg.ess_power_max_mw, 8.0);
}

TEST(BalanceResidual, Examples) {
  EXPECT_DOUBLE_EQ(balance_residual({30, 0, 0}, 0, 30), 0.0);
  EXPECT_DOUBLE_EQ(balance_residual({0, 10, 20}, 60, 30), 0.0);
  EXPECT_DOUBLE_EQ(balance_residual({0, 0, 0}, 20, 30), -10.0);
}

TEST(BalanceResidual, LinearInEachArgument) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int i = 0; i < 200; ++i) {
    const Action a{u(rng), u(rng), u(rng)};
    const Action b{u(rng), u(rng), u(rng)};
    const double r1 = u(rng), r2 = u(rng), l1 = u(rng), l2 = u(rng), t = u(rng) / 50;
    const Action mix{a.dtg_mw + t * b.dtg_mw, a.ess_mw + t * b.ess_mw,
                     a.curtail_mw + t * b.curtail_mw};
    const double lhs = balance_residual(mix, r1 + t * r2, l1 + t * l2);
    const double rhs = balance_residual(a, r1, l1) + t * balance_residual(b, r2, l2);
    EXPECT_NEAR(lhs, rhs, 1e-10);
  }
}

TEST(StepStorage, Examples) {
  const SystemConfig cfg;
  EXPECT_NEAR(step_storage(50, 10, cfg), 51.6, 1e-12);
  EXPECT_NEAR(step_storage(50, -10, cfg), 50 - (10 / 0.96) / 6, 1e-12);
  EXPECT_NEAR(step_storage(50, -10, cfg), 48.2639, 1e-4);
  EXPECT_DOUBLE_EQ(step_storage(50, 0, cfg), 50.0);
}

TEST(StepStorage, RejectsPowerAboveLimit) {
  const SystemConfig cfg = SystemConfig{}.with_capacities(8.0, 150.0);
  EXPECT_THROW(step_storage(4.0, 9.0, cfg), std::invalid_argument);
  EXPECT_THROW(step_storage(4.0, -9.0, cfg), std::invalid_argument);
}

TEST(StepStorage, DoesNotClamp) {
  const SystemConfig cfg;
  EXPECT_LT(step_storage(0.0, -10.0, cfg), 0.0);
  EXPECT_GT(step_storage(80.0, 10.0, cfg), 80.0);
}

TEST(StepStorage, RoundTripEfficiencyIs9216Percent) {
  const SystemConfig cfg;
  // Charge for one step, then discharge until the stored gain is gone.
  const double charge_mw = 12.0;
  const double stored = step_storage(0.0, charge_mw, cfg);
  const double drawn_mw = stored * cfg.eta_discharge / cfg.dt_hours;
  EXPECT_NEAR(step_storage(stored, -drawn_mw, cfg), 0.0, 1e-12);
  const double delivered = drawn_mw * cfg.dt_hours;
  const double absorbed = charge_mw * cfg.dt_hours;
  EXPECT_NEAR(delivered / absorbed, 0.9216, 0.9216 * 1e-12);
}

TEST(ActionViolations, DetectsEachKind) {
  const SystemConfig cfg;
  const SystemState st{40.0, 0.0};
  EXPECT_TRUE(action_violations({30, 0, 0}, st, 0, 30, cfg).empty());
  EXPECT_FALSE(action_violations({5, 0, 0}, st, 25, 30, cfg).empty());
  EXPECT_FALSE(action_violations({0, 0, -1}, st, 29, 30, cfg).empty());
  EXPECT_FALSE(action_violations({0, 0, 0}, st, 20, 30, cfg).empty());
  // Discharging more than stored.
  const SystemState low{0.5, 0.0};
  EXPECT_FALSE(action_violations({0, -30, 0}, low, 0, 30, cfg).empty());
}

TEST(AverageDtgUsage, ArithmeticMean) {
  Trajectory t;
  EXPECT_THROW(average_dtg_usage(t), std::invalid_argument);
  t.steps.resize(2);
  EXPECT_DOUBLE_EQ(average_dtg_usage(t), 0.0);
  t.steps[0].action.dtg_mw = 40.0;
  EXPECT_DOUBLE_EQ(average_dtg_usage(t), 20.0);
}

}  // namespace
}  // namespace hybridsize
