#include "hybridsize/mpc.hpp"

#include <gtest/gtest.h>

#include <random>

namespace hybridsize::mpc {
namespace {

SystemConfig config_with_horizon(int H) {
  SystemConfig cfg;
  cfg.horizon_steps = H;
  return cfg;
}

HorizonWindow constant_window(int H, double rps, double load) {
  return {std::vector<double>(H, rps), std::vector<double>(H, load)};
}

struct Instance {
  SystemConfig cfg;
  SystemState state;
  HorizonWindow window;
};

Instance random_instance(std::mt19937_64& rng, int H) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Instance in;
  in.cfg = config_with_horizon(H).with_capacities(80.0 * u(rng), 150.0 * u(rng));
  in.state.ess_energy_mwh = in.cfg.ess_capacity_mwh * u(rng);
  in.state.prev_dtg_mw = u(rng) < 0.4 ? 0.0 : 14.0 + 26.0 * u(rng);
  const double level = u(rng);
  for (int k = 0; k < H; ++k) {
    in.window.load_mw.push_back(15.0 + 23.0 * u(rng));
    in.window.rps_mw.push_back(in.cfg.rps_capacity_mw * std::clamp(level + 0.3 * (u(rng) - 0.5), 0.0, 1.0));
  }
  return in;
}

// Minimum over all 2^H on/off patterns, each a convex QP.
double enumerate_patterns(const MiqpProblem& p) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<OnOff> pattern(p.horizon);
  for (unsigned mask = 0; mask < (1u << p.horizon); ++mask) {
    for (int k = 0; k < p.horizon; ++k) pattern[k] = (mask >> k) & 1u ? OnOff::On : OnOff::Off;
    auto qp = p.relaxation;
    qp.h = p.bounds_rhs(pattern);
    const auto sol = qp::solve(qp);
    if (sol.status == qp::Status::Optimal) {
      best = std::min(best, sol.objective + p.objective_constant);
    }
  }
  return best;
}

double max_violation(const MiqpProblem& p, const PlanSolution& plan) {
  std::vector<OnOff> pattern(p.horizon);
  for (int k = 0; k < p.horizon; ++k) pattern[k] = plan.on[k] ? OnOff::On : OnOff::Off;
  const Eigen::VectorXd h = p.bounds_rhs(pattern);
  const double eq = (p.relaxation.A * plan.z - p.relaxation.b).cwiseAbs().maxCoeff();
  const double ineq = (p.relaxation.G * plan.z - h).maxCoeff();
  return std::max(eq, std::max(0.0, ineq));
}

TEST(BuildHorizonProblem, UsageOnlyObjectiveIsLinear) {
  SystemConfig cfg = config_with_horizon(2);
  cfg.weights = {1.0, 0.0, 0.0, 0.0};
  const auto p = build_horizon_problem({10.0, 0.0}, constant_window(2, 0.0, 30.0), cfg);
  EXPECT_TRUE(p.relaxation.Q.isZero());
  for (int k = 0; k < 2; ++k) {
    EXPECT_DOUBLE_EQ(p.relaxation.c[MiqpProblem::index(k, Var::Dtg)], 0.5);
    EXPECT_DOUBLE_EQ(p.relaxation.c[MiqpProblem::index(k, Var::EssPlus)], 0.0);
  }
  EXPECT_EQ(p.relaxation.c.cwiseAbs().sum(), 1.0);
}

TEST(BuildHorizonProblem, PreviousGeneratorPowerEntersFirstDifference) {
  SystemConfig cfg = config_with_horizon(3);
  cfg.weights = {0.0, 0.6, 0.0, 0.0};
  const auto p = build_horizon_problem({0.0, 20.0}, constant_window(3, 0.0, 30.0), cfg);
  const int d0 = MiqpProblem::index(0, Var::Dtg);
  const double w = 0.6 / 3.0;
  EXPECT_DOUBLE_EQ(p.relaxation.c[d0], -2.0 * w * 20.0);
  EXPECT_DOUBLE_EQ(p.objective_constant, w * 400.0);
  // The objective at dtg = (20, 20, 20) is zero: no change from the previous step.
  Eigen::VectorXd z = Eigen::VectorXd::Zero(p.relaxation.num_variables());
  for (int k = 0; k < 3; ++k) z[MiqpProblem::index(k, Var::Dtg)] = 20.0;
  EXPECT_NEAR(p.relaxation.objective(z) + p.objective_constant, 0.0, 1e-12);
  z[d0] = 25.0;  // (25 - 20)^2 + (20 - 25)^2
  EXPECT_NEAR(p.relaxation.objective(z) + p.objective_constant, w * 50.0, 1e-12);
}

TEST(BuildHorizonProblem, CurtailmentIsNotInTheObjective) {
  const SystemConfig cfg;
  const auto p = build_horizon_problem(default_initial_state(cfg),
                                       constant_window(cfg.horizon_steps, 50.0, 30.0), cfg);
  for (int k = 0; k < cfg.horizon_steps; ++k) {
    const int cu = MiqpProblem::index(k, Var::Curtail);
    EXPECT_TRUE(p.relaxation.Q.row(cu).isZero());
    EXPECT_TRUE(p.relaxation.Q.col(cu).isZero());
    EXPECT_EQ(p.relaxation.c[cu], 0.0);
  }
}

TEST(BuildHorizonProblem, RejectsWrongWindowLength) {
  const SystemConfig cfg = config_with_horizon(4);
  EXPECT_THROW(build_horizon_problem({}, constant_window(3, 0.0, 30.0), cfg),
               std::invalid_argument);
}

TEST(SolveMiqp, NoRenewablesKeepsGeneratorOn) {
  const SystemConfig cfg = config_with_horizon(4);
  const auto p = build_horizon_problem({0.0, 0.0}, constant_window(4, 0.0, 30.0), cfg);
  const auto plan = solve_miqp(p);
  EXPECT_NEAR(plan.objective, enumerate_patterns(p), 1e-6 * (1.0 + std::abs(plan.objective)));
  for (int k = 0; k < 4; ++k) {
    EXPECT_TRUE(plan.on[k]);
    EXPECT_NEAR(plan.actions[k].dtg_mw, 30.0, 1e-6);
  }
  const Action first = mpc_policy({0.0, 0.0}, constant_window(4, 0.0, 30.0), cfg);
  EXPECT_NEAR(first.dtg_mw, 30.0, 1e-6);
}

TEST(SolveMiqp, AmpleRenewablesKeepGeneratorOff) {
  const SystemConfig cfg = config_with_horizon(4);
  const auto p = build_horizon_problem({0.0, 0.0}, constant_window(4, 100.0, 30.0), cfg);
  const auto plan = solve_miqp(p);
  EXPECT_NEAR(plan.objective, enumerate_patterns(p), 1e-6 * (1.0 + std::abs(plan.objective)));
  for (int k = 0; k < 4; ++k) {
    EXPECT_FALSE(plan.on[k]);
    EXPECT_EQ(plan.actions[k].dtg_mw, 0.0);
    EXPECT_GE(plan.actions[k].ess_mw, 0.0);
    EXPECT_NEAR(plan.actions[k].ess_mw + plan.actions[k].curtail_mw, 70.0, 1e-6);
  }
  const Action first = mpc_policy({0.0, 0.0}, constant_window(4, 100.0, 30.0), cfg);
  EXPECT_EQ(first.dtg_mw, 0.0);
}

TEST(SolveMiqp, NoStorageMeansGeneratorMatchesLoad) {
  const SystemConfig cfg = config_with_horizon(1).with_capacities(0.0, 150.0);
  const auto plan = solve_miqp(build_horizon_problem({0.0, 0.0}, constant_window(1, 0.0, 30.0), cfg));
  EXPECT_DOUBLE_EQ(plan.actions[0].dtg_mw, 30.0);
  EXPECT_EQ(plan.actions[0].ess_mw, 0.0);
  EXPECT_EQ(plan.actions[0].curtail_mw, 0.0);
}

TEST(SolveMiqpProperty, MatchesEnumerationOracle) {
  std::mt19937_64 rng(4242);
  int checked = 0;
  for (const int H : {2, 4, 6}) {
    for (int trial = 0; trial < 40; ++trial, ++checked) {
      const auto in = random_instance(rng, H);
      const auto p = build_horizon_problem(in.state, in.window, in.cfg);
      const auto plan = solve_miqp(p);
      const double oracle = enumerate_patterns(p);
      EXPECT_NEAR(plan.objective, oracle, 1e-6 * (1.0 + std::abs(oracle)))
          << "H=" << H << " trial " << trial;
      EXPECT_LE(plan.bound_gap, 1e-6 * (1.0 + std::abs(plan.objective)));
    }
  }
  EXPECT_GE(checked, 100);
}

TEST(SolveMiqpProperty, PlansAreFeasible) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const int H = trial < 20 ? 2 + trial % 7 : 36;
    const auto in = random_instance(rng, H);
    const auto p = build_horizon_problem(in.state, in.window, in.cfg);
    const auto plan = solve_miqp(p);
    EXPECT_LE(max_violation(p, plan), 1e-7) << "trial " << trial;
    SystemState st = in.state;
    std::vector<double> dtg, ess;
    for (int k = 0; k < H; ++k) {
      const auto& a = plan.actions[k];
      EXPECT_TRUE(action_violations(a, st, in.window.rps_mw[k], in.window.load_mw[k], in.cfg).empty())
          << "trial " << trial << " step " << k;
      EXPECT_LE(std::abs(balance_residual(a, in.window.rps_mw[k], in.window.load_mw[k])), 1e-9);
      st = {step_storage(st.ess_energy_mwh, a.ess_mw, in.cfg), a.dtg_mw};
      EXPECT_DOUBLE_EQ(st.ess_energy_mwh, plan.energy_mwh[k]);
      dtg.push_back(a.dtg_mw);
      ess.push_back(a.ess_mw);
    }
    const double j = evaluate_objective(dtg, ess, plan.energy_mwh.back(), in.state, in.cfg);
    EXPECT_NEAR(plan.objective, j, 1e-6 * std::abs(j) + 1e-12);
  }
}

TEST(SolveMiqpProperty, NoSimultaneousChargeAndDischarge) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const auto in = random_instance(rng, 2 + trial % 9);
    const auto p = build_horizon_problem(in.state, in.window, in.cfg);
    const auto plan = solve_miqp(p);
    for (int k = 0; k < p.horizon; ++k) {
      const double plus = plan.z[MiqpProblem::index(k, Var::EssPlus)];
      const double minus = plan.z[MiqpProblem::index(k, Var::EssMinus)];
      EXPECT_LE(std::min(plus, minus), 1e-6) << "trial " << trial << " step " << k;
    }
  }
}

TEST(SolveMiqpProperty, MoreStorageOrRenewablesNeverHurt) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const auto in = random_instance(rng, 2 + trial % 5);
    const double base = solve_miqp(build_horizon_problem(in.state, in.window, in.cfg)).objective;
    const double tol = 1e-6 * (1.0 + std::abs(base));

    const SystemConfig bigger = in.cfg.with_capacities(
        in.cfg.ess_capacity_mwh + (80.0 - in.cfg.ess_capacity_mwh) * u(rng), in.cfg.rps_capacity_mw);
    EXPECT_LE(solve_miqp(build_horizon_problem(in.state, in.window, bigger)).objective, base + tol)
        << "trial " << trial;

    HorizonWindow more = in.window;
    for (auto& r : more.rps_mw) r += 20.0 * u(rng);
    SystemConfig wide = in.cfg;
    wide.rps_capacity_mw = 150.0;
    EXPECT_LE(solve_miqp(build_horizon_problem(in.state, more, wide)).objective, base + tol)
        << "trial " << trial;
  }
}

TEST(SolveMiqpProperty, StartPatternsDoNotChangeTheOptimum) {
  std::mt19937_64 rng(77);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 40; ++trial) {
    const int H = 2 + trial % 5;
    const auto in = random_instance(rng, H);
    const auto p = build_horizon_problem(in.state, in.window, in.cfg);
    std::vector<std::vector<bool>> starts(3, std::vector<bool>(H));
    for (int k = 0; k < H; ++k) {
      starts[0][k] = true;
      starts[2][k] = coin(rng);
    }
    BranchAndBoundSettings plain;
    plain.root_rounding = false;
    const auto base = solve_miqp(p, plain);
    const auto seeded = solve_miqp(p, {}, starts);
    const double oracle = enumerate_patterns(p);
    EXPECT_NEAR(base.objective, oracle, 1e-6 * (1.0 + std::abs(oracle))) << "trial " << trial;
    EXPECT_NEAR(seeded.objective, oracle, 1e-6 * (1.0 + std::abs(oracle))) << "trial " << trial;
  }
}

TEST(SolveMiqp, StartPatternOfWrongLengthThrows) {
  std::mt19937_64 rng(3);
  const auto in = random_instance(rng, 4);
  const auto p = build_horizon_problem(in.state, in.window, in.cfg);
  const std::vector<std::vector<bool>> starts{std::vector<bool>(3, true)};
  EXPECT_THROW(solve_miqp(p, {}, starts), std::invalid_argument);
}

TEST(MpcPolicy, SeededPolicyMatchesStatelessSolve) {
  std::mt19937_64 rng(12);
  const auto in = random_instance(rng, 8);
  std::vector<double> rps(40), load(40);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 40; ++t) {
    load[t] = 20.0 + 15.0 * u(rng);
    rps[t] = in.cfg.rps_capacity_mw * u(rng);
  }
  auto seeded = make_mpc_policy(in.cfg);
  SystemState state = default_initial_state(in.cfg);
  for (std::size_t t = 0; t < 20; ++t) {
    const HorizonWindow w{padded_window(rps, t, 8), padded_window(load, t, 8)};
    const Action a = seeded(state, w, t);
    const auto first = mpc_policy(state, w, in.cfg);
    EXPECT_TRUE(action_violations(a, state, rps[t], load[t], in.cfg).empty());
    state = {step_storage(state.ess_energy_mwh, first.ess_mw, in.cfg), first.dtg_mw};
    if (std::abs(a.dtg_mw - first.dtg_mw) > 1e-6 || std::abs(a.ess_mw - first.ess_mw) > 1e-6) {
      ADD_FAILURE() << "step " << t << ": seeded " << a.dtg_mw << "/" << a.ess_mw << " vs "
                    << first.dtg_mw << "/" << first.ess_mw;
    }
  }
}

TEST(SolveMiqp, Deterministic) {
  std::mt19937_64 rng(8);
  const auto in = random_instance(rng, 36);
  const auto p = build_horizon_problem(in.state, in.window, in.cfg);
  const auto a = solve_miqp(p);
  const auto b = solve_miqp(p);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.on, b.on);
}

TEST(PaddedWindow, HoldsLastValue) {
  const std::vector<double> s{1, 2, 3};
  EXPECT_EQ(padded_window(s, 1, 4), (std::vector<double>{2, 3, 3, 3}));
}

TEST(Rollout, ConstantLoadWithoutRenewables) {
  const SystemConfig cfg;
  const std::vector<double> rps(20, 0.0), load(20, 30.0);
  const auto t = rollout(make_mpc_policy(cfg), rps, load, cfg, {0.0, 0.0});
  EXPECT_EQ(t.steps.size(), 20u);
  EXPECT_NEAR(average_dtg_usage(t), 30.0, 1e-6);
}

TEST(Rollout, RenewablesMatchingLoad) {
  const SystemConfig cfg;
  const std::vector<double> rps(20, 30.0), load(20, 30.0);
  const auto t = rollout(make_mpc_policy(cfg), rps, load, cfg, {0.0, 0.0});
  EXPECT_EQ(average_dtg_usage(t), 0.0);
}

TEST(Rollout, StateFollowsStorageRecursion) {
  const SystemConfig cfg;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> rps(30), load(30);
  for (int i = 0; i < 30; ++i) {
    rps[i] = 60.0 * u(rng);
    load[i] = 25.0 + 10.0 * u(rng);
  }
  const auto t = rollout(make_mpc_policy(cfg), rps, load, cfg, default_initial_state(cfg), 12);
  ASSERT_EQ(t.steps.size(), 12u);
  for (std::size_t i = 0; i + 1 < t.steps.size(); ++i) {
    EXPECT_EQ(t.steps[i + 1].state.ess_energy_mwh,
              step_storage(t.steps[i].state.ess_energy_mwh, t.steps[i].action.ess_mw, cfg));
    EXPECT_EQ(t.steps[i + 1].state.prev_dtg_mw, t.steps[i].action.dtg_mw);
  }
}

TEST(Rollout, RejectsInfeasiblePolicyAndExcessLoad) {
  const SystemConfig cfg;
  const std::vector<double> rps(5, 0.0), load(5, 30.0);
  const Policy idle = [](const SystemState&, const HorizonWindow&, std::size_t) { return Action{}; };
  EXPECT_THROW(rollout(idle, rps, load, cfg, {0.0, 0.0}), std::runtime_error);
  const std::vector<double> heavy(5, 45.0);
  EXPECT_THROW(rollout(make_mpc_policy(cfg), rps, heavy, cfg, {0.0, 0.0}), std::invalid_argument);
}

}  // namespace
}  // namespace hybridsize::mpc
