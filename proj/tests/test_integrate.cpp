#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "slowfast/error.hpp"
#include "slowfast/integrate.hpp"
#include "slowfast/model.hpp"
#include "slowfast/statistics.hpp"
#include "support.hpp"

using namespace slowfast;
using slowfast::testing::ScalarModel;
using slowfast::testing::kX0;
using slowfast::testing::kY0;
using slowfast::testing::scalar_field;

namespace {

using State2 = std::array<double, 2>;

// Noise-free benchmark at epsilon = 1: x' = sin x + y, y' = -(y - cos x).
ScalarModel deterministic_benchmark() {
  ScalarModel sm;
  sm.a = [](double x, double y) { return std::sin(x) + y; };
  sm.f = [](double x, double y) { return -(y - std::cos(x)); };
  return sm;
}

}  // namespace

TEST(ScaleParams, Validation) {
  EXPECT_NO_THROW((ScaleParams{0.5, 1.0, 0.05}.validate()));
  EXPECT_THROW((ScaleParams{0.0, 1.0, 0.01}.validate()), InvalidInputError);
  EXPECT_THROW((ScaleParams{1.5, 1.0, 0.01}.validate()), InvalidInputError);
  EXPECT_THROW((ScaleParams{0.5, 0.0, 0.01}.validate()), InvalidInputError);
  EXPECT_THROW((ScaleParams{0.5, 1.0, 0.0}.validate()), InvalidInputError);
  EXPECT_THROW((ScaleParams{0.5, 1.0, 0.06}.validate()), InvalidInputError);
}

TEST(TimeGrid, ContainsJumpsAndEndpoints) {
  const JumpSchedule slow = sample_jump_times(3.0, 1.0, RandomPlan{1}, NoiseRole::kSlowJumps);
  const JumpSchedule fast = sample_jump_times(20.0, 1.0, RandomPlan{1}, NoiseRole::kFastJumps);
  const TimeGrid grid = make_time_grid(1.0, 0.03, &slow, &fast);
  ASSERT_EQ(grid.nodes.size(), grid.flags.size());
  EXPECT_EQ(grid.nodes.front(), 0.0);
  EXPECT_EQ(grid.nodes.back(), 1.0);
  for (std::size_t i = 1; i < grid.nodes.size(); ++i) ASSERT_LT(grid.nodes[i - 1], grid.nodes[i]);
  auto has = [&](double t, std::uint8_t flag) {
    for (std::size_t i = 0; i < grid.nodes.size(); ++i) {
      if (grid.nodes[i] == t) return (grid.flags[i] & flag) != 0;
    }
    return false;
  };
  for (double t : slow.times) EXPECT_TRUE(has(t, kSlowJump));
  for (double t : fast.times) EXPECT_TRUE(has(t, kFastJump));
  EXPECT_EQ(base_step_count(1.0, 0.03), 34u);
  EXPECT_EQ(base_step_count(1.0, 0.25), 4u);
}

TEST(SimulateCoupled, ConstantSlowEquation) {
  ScalarModel sm;
  sm.g = [](double, double) { return 1.0; };
  sm.h = [](double, double y) { return 0.1 * y; };
  sm.lambda2 = 2.0;
  const auto m = sm.build();
  const std::vector<double> x0{0.75}, y0{2.0};
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto r = simulate_coupled(m, {0.1, 1.0, 0.005}, x0, y0, RandomPlan{s});
    EXPECT_EQ(r.x_T[0], 0.75);
  }
}

TEST(SimulateCoupled, MatchesAdaptiveOdeOracle) {
  const auto m = deterministic_benchmark().build();
  const std::vector<double> x0{0.0}, y0{0.5};
  for (double dt : {1e-2, 1e-3}) {
    const auto r = simulate_coupled(m, {1.0, 1.0, dt, 1.0}, x0, y0, RandomPlan{}, true);
    ASSERT_TRUE(r.path);
    const auto& path = *r.path;

    State2 s{0.0, 0.5};
    auto rhs = [](const State2& u, State2& du, double) {
      du[0] = std::sin(u[0]) + u[1];
      du[1] = -(u[1] - std::cos(u[0]));
    };
    std::vector<State2> oracle;
    namespace ode = boost::numeric::odeint;
    ode::integrate_times(ode::make_dense_output(1e-12, 1e-12, ode::runge_kutta_dopri5<State2>()),
                         rhs, s, path.t.begin(), path.t.end(), 1e-4,
                         [&](const State2& u, double) { oracle.push_back(u); });
    ASSERT_EQ(oracle.size(), path.t.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < path.t.size(); ++i) {
      worst = std::max({worst, std::abs(path.x[i] - oracle[i][0]),
                        std::abs(path.y[i] - oracle[i][1])});
    }
    EXPECT_LE(worst, 5.0 * dt) << "dt=" << dt;
    EXPECT_GT(worst, 0.0);
  }
}

// At epsilon = 1 the coupled scheme is a plain Euler-Maruyama recursion of
// the joint (x, y) system; rebuild it from brownian_increments on the same plan.
TEST(SimulateCoupled, EpsilonOneMatchesSingleScaleReference) {
  ScalarModel sm;
  sm.a = [](double x, double y) { return std::sin(x) + y; };
  sm.b = [](double x) { return 0.3 + 0.1 * std::cos(x); };
  sm.f = [](double x, double y) { return -(y - std::cos(x)); };
  sm.g = [](double, double y) { return 0.5 + 0.1 * std::tanh(y); };
  const auto m = sm.build();
  const double T = 1.0, dt = 0.01;
  const std::size_t steps = base_step_count(T, dt);
  std::vector<double> lens;
  for (std::size_t k = 0; k < steps; ++k) {
    const double ta = static_cast<double>(k) * dt;
    const double tb = k + 1 == steps ? T : static_cast<double>(k + 1) * dt;
    lens.push_back(tb - ta);
  }
  for (std::uint64_t s = 0; s < 20; ++s) {
    const RandomPlan plan{s, 3};
    // Unit steps give the raw normals; full steps scale by sqrt(dt), the
    // shortened last step by the root of its length.
    const std::vector<double> unit(steps, 1.0);
    const auto zB = brownian_increments(unit, 1, plan, NoiseRole::kSlowBrownian);
    const auto zW = brownian_increments(unit, 1, plan, NoiseRole::kFastBrownian);
    double x = 0.2, y = -0.4;
    for (std::size_t k = 0; k < steps; ++k) {
      const double root = k + 1 == steps ? std::sqrt(lens[k]) : std::sqrt(dt);
      const double xn = x + sm.a(x, y) * lens[k] + sm.b(x) * (zB[k][0] * root);
      const double yn = y + (sm.f(x, y) * lens[k] + sm.g(x, y) * (zW[k][0] * root));
      x = xn;
      y = yn;
    }
    const std::vector<double> x0{0.2}, y0{-0.4};
    const auto r = simulate_coupled(m, {1.0, T, dt, 1.0}, x0, y0, plan);
    EXPECT_EQ(r.x_T[0], x) << "seed " << s;
    EXPECT_EQ(r.y_T[0], y) << "seed " << s;
  }
}

TEST(SimulateCoupled, FlowPropertyAtEpsilonOne) {
  const auto m = make_jump_ou_benchmark({});
  const ScaleParams scale{1.0, 1.0, 0.01, 1.0};
  for (std::uint64_t s = 0; s < 10; ++s) {
    const RandomPlan plan{s};
    const CoupledIntegrator integ(m, scale, plan);
    std::vector<double> x{0.0}, y{0.5};
    PathRecord whole;
    integ.advance(x, y, 0.0, 1.0, &whole);

    std::vector<double> x2{0.0}, y2{0.5};
    PathRecord split;
    integ.advance(x2, y2, 0.0, 0.5, &split);
    integ.advance(x2, y2, 0.5, 1.0, &split);
    EXPECT_EQ(x, x2);
    EXPECT_EQ(y, y2);
    EXPECT_EQ(whole.t, split.t);
    EXPECT_EQ(whole.x, split.x);
    EXPECT_EQ(whole.y, split.y);
    EXPECT_EQ(whole.flags, split.flags);
  }
}

TEST(SimulateCoupled, PathRecordsJumpNodes) {
  JumpOuParams p;
  p.lambda1 = 5.0;
  const auto m = make_jump_ou_benchmark(p);
  const ScaleParams scale{0.25, 1.0, 0.02};
  const RandomPlan plan{4};
  const std::vector<double> x0{0.0}, y0{0.5};
  const auto r = simulate_coupled(m, scale, x0, y0, plan, true);
  const CoupledIntegrator integ(m, scale, plan);
  std::size_t slow = 0, fast = 0;
  for (auto f : r.path->flags) {
    slow += (f & kSlowJump) != 0;
    fast += (f & kFastJump) != 0;
  }
  EXPECT_EQ(slow, integ.slow_jumps().times.size());
  EXPECT_EQ(fast, integ.fast_jumps().times.size());
  EXPECT_EQ(r.path->x.size(), r.path->t.size());
  EXPECT_EQ(r.path->x.back(), r.x_T[0]);
}

TEST(SimulateCoupled, BlowUpCarriesTime) {
  ScalarModel sm;
  sm.a = [](double x, double) { return x * x; };
  const auto m = sm.build();
  const std::vector<double> x0{1.0}, y0{0.0};
  try {
    simulate_coupled(m, {1.0, 5.0, 0.01, 1.0}, x0, y0, RandomPlan{});
    FAIL() << "expected blow-up";
  } catch (const BlowUpError& e) {
    EXPECT_GT(e.time(), 0.5);
    EXPECT_LT(e.time(), 5.0);
    EXPECT_FALSE(e.sample());
  }
}

TEST(SimulateFrozen, FixedPointAndRelaxation) {
  ScalarModel sm;
  sm.f = [](double x, double y) { return -(y - std::cos(x)); };
  const auto m = sm.build();
  const std::vector<double> x{0.0};
  const double dt = 0.01;
  const auto still = simulate_frozen(m, x, std::vector<double>{1.0}, 5.0, dt, RandomPlan{});
  for (double y : still.y) EXPECT_EQ(y, 1.0);

  const auto relax = simulate_frozen(m, x, std::vector<double>{2.0}, 5.0, dt, RandomPlan{});
  ASSERT_EQ(relax.t.size(), relax.y.size());
  for (std::size_t i = 0; i < relax.t.size(); ++i) {
    EXPECT_NEAR(relax.y[i], 1.0 + std::exp(-relax.t[i]), 5.0 * dt);
  }
  EXPECT_EQ(frozen_state_at(m, x, std::vector<double>{2.0}, 5.0, dt, RandomPlan{})[0],
            relax.y.back());
}

TEST(SimulateAveraged, TrivialAndLinear) {
  ScalarModel sm;
  const auto m = sm.build();
  const std::vector<double> x0{1.0};
  const auto still = simulate_averaged(scalar_field([](double) { return 0.0; }), m, x0, 1.0,
                                       0.01, RandomPlan{9});
  EXPECT_EQ(still.x_T[0], 1.0);
  for (double dt : {1e-2, 1e-3}) {
    const auto decay = simulate_averaged(scalar_field([](double x) { return -x; }), m, x0, 1.0,
                                         dt, RandomPlan{9});
    EXPECT_NEAR(decay.x_T[0], std::exp(-1.0), 5.0 * dt);
  }
}

TEST(SimulateAveraged, EqualsCoupledWhenDriftIgnoresFastState) {
  JumpOuParams p;
  p.gamma = 0.0;
  p.lambda1 = 4.0;
  const auto m = make_jump_ou_benchmark(p);
  const auto abar = [&m](ConstVec x, MutVec out) { m.abar_analytic(x, out); };
  const std::vector<double> x0{0.3}, y0{0.5};
  const ScaleParams scale{0.125, 1.0, 0.0125};
  for (std::uint64_t s = 0; s < 20; ++s) {
    const RandomPlan plan{s, 1};
    const auto c = simulate_coupled(m, scale, x0, y0, plan, true);
    const auto a = simulate_averaged(abar, m, x0, scale.T, scale.dt, plan, true);
    EXPECT_EQ(c.x_T, a.x_T);
    // Every averaged node is a coupled node with the same slow state.
    std::size_t j = 0;
    for (std::size_t i = 0; i < a.path->t.size(); ++i) {
      while (j < c.path->t.size() && c.path->t[j] < a.path->t[i]) ++j;
      ASSERT_LT(j, c.path->t.size());
      ASSERT_EQ(c.path->t[j], a.path->t[i]);
      EXPECT_EQ(c.path->x[j], a.path->x[i]);
    }
  }
}

TEST(SimulateCoupledPair, BitIdenticalToSeparateCalls) {
  const auto m = make_jump_ou_benchmark({});
  const auto abar = [&m](ConstVec x, MutVec out) { m.abar_analytic(x, out); };
  const std::vector<double> x0{0.0}, y0{0.5};
  const ScaleParams scale{0.125, 1.0, 0.0125};
  for (std::uint64_t s = 0; s < 20; ++s) {
    const RandomPlan plan{s};
    const auto pair = simulate_coupled_pair(m, abar, scale, x0, y0, plan);
    EXPECT_EQ(pair.x_eps, simulate_coupled(m, scale, x0, y0, plan).x_T);
    EXPECT_EQ(pair.y_eps, simulate_coupled(m, scale, x0, y0, plan).y_T);
    EXPECT_EQ(pair.x_bar, simulate_averaged(abar, m, x0, scale.T, scale.dt, plan).x_T);
  }
}

TEST(FirstVariation, ConstantCoefficientsKeepDirection) {
  ScalarModel sm;
  sm.b = [](double) { return 0.4; };
  sm.c = [](double) { return 0.2; };
  sm.lambda1 = 3.0;
  const auto m = sm.build();
  const std::vector<double> x0{0.1}, k{2.5};
  const auto r = simulate_first_variation(scalar_field([](double) { return 1.0; }), m, x0, k,
                                          1.0, 0.01, RandomPlan{3});
  EXPECT_EQ(r.eta_T[0], 2.5);
}

TEST(FirstVariation, LinearDrift) {
  ScalarModel sm;
  const auto m = sm.build();
  const std::vector<double> x0{0.4}, k{1.0};
  for (double lambda : {-1.0, 0.5}) {
    for (double dt : {1e-2, 1e-3}) {
      const auto r = simulate_first_variation(
          scalar_field([lambda](double x) { return lambda * x; }), m, x0, k, 1.0, dt,
          RandomPlan{});
      EXPECT_NEAR(r.eta_T[0], std::exp(lambda), 5.0 * dt * std::exp(lambda));
    }
  }
  EXPECT_THROW(simulate_first_variation(scalar_field([](double x) { return x; }), m, x0,
                                        std::vector<double>{0.0}, 1.0, 0.01, RandomPlan{}),
               InvalidInputError);
}

TEST(Parallel, ResultsIndependentOfWorkerCount) {
  const auto m = make_jump_ou_benchmark({});
  const std::vector<double> x0{0.0}, y0{0.5};
  auto run = [&] {
    return parallel_sample_stats(5000, 2, [&](std::size_t i, std::span<double> out) {
      const auto r = simulate_coupled(m, {0.25, 1.0, 0.025}, x0, y0, RandomPlan{1}.for_sample(i));
      out[0] = r.x_T[0];
      out[1] = r.y_T[0];
    });
  };
  set_thread_count(1);
  const auto one = run();
  set_thread_count(3);
  const auto three = run();
  set_thread_count(0);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(one[j].mean(), three[j].mean());
    EXPECT_EQ(one[j].variance(), three[j].variance());
  }
}

TEST(Parallel, BlowUpReportsSampleIndex) {
  ScalarModel sm;
  sm.a = [](double x, double) { return x * x; };
  const auto m = sm.build();
  const std::vector<double> y0{0.0};
  try {
    parallel_sample_stats(10, 1, [&](std::size_t i, std::span<double> out) {
      const std::vector<double> x0{i == 7 ? 2.0 : 0.0};
      out[0] = simulate_coupled(m, {1.0, 1.0, 0.01, 1.0}, x0, y0, RandomPlan{}).x_T[0];
    });
    FAIL() << "expected blow-up";
  } catch (const BlowUpError& e) {
    ASSERT_TRUE(e.sample());
    EXPECT_EQ(*e.sample(), 7u);
  }
}

TEST(SimulateCoupled, SlowDriftSeesFastJumpsFromTheJumpTime) {
  // a = y with Y a pure jump counter: X_T = y0 T + sum over jumps of (T - tau).
  // Holding Y from the start of each base step would lose h (t_end - tau).
  ScalarModel sm;
  sm.a = [](double, double y) { return y; };
  sm.f = [](double, double) { return 0.0; };
  sm.h = [](double, double) { return 1.0; };
  sm.lambda2 = 5.0;
  const auto m = sm.build();
  const double eps = 0.5, T = 1.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const RandomPlan plan{s};
    const auto jumps = sample_jump_times(sm.lambda2 / eps, T, plan, NoiseRole::kFastJumps);
    ASSERT_FALSE(jumps.times.empty());
    double expected = 0.5 * T;
    for (double tau : jumps.times) expected += T - tau;
    const auto r = simulate_coupled(m, {eps, T, 0.05}, kX0, kY0, plan);
    EXPECT_NEAR(r.x_T[0], expected, 1e-12);
    EXPECT_EQ(r.y_T[0], 0.5 + static_cast<double>(jumps.times.size()));
  }
}
