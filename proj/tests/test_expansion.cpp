#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "slowfast/ergodic.hpp"
#include "slowfast/error.hpp"
#include "slowfast/expansion.hpp"
#include "slowfast/model.hpp"
#include "support.hpp"

using namespace slowfast;
using slowfast::testing::kX0;
using slowfast::testing::kY0;
using slowfast::testing::ScalarModel;
using slowfast::testing::scalar_field;

namespace {

const std::vector<double> kUnit{1.0};

U1Settings quick_u1() {
  U1Settings s;
  s.n_paths = 512;
  s.n_derivative = 4000;
  s.dt_averaged = 0.01;
  s.dt_frozen = 0.02;
  return s;
}

}  // namespace

TEST(DxUbar, IdentityFlow) {
  ScalarModel sm;
  const auto m = sm.build();
  const auto d = estimate_Dx_ubar(scalar_field([](double) { return 0.0; }), m,
                                  Observable::coordinate(0), 1.0, kX0, kUnit, 16, 0.01,
                                  RandomPlan{});
  EXPECT_EQ(d.mean, 1.0);
  EXPECT_EQ(d.std_error, 0.0);
}

TEST(DxUbar, LinearVariation) {
  ScalarModel sm;
  const auto m = sm.build();
  for (double lambda : {-0.7, 0.4}) {
    for (double dt : {1e-2, 1e-3}) {
      const auto d = estimate_Dx_ubar(scalar_field([lambda](double x) { return lambda * x; }), m,
                                      Observable::coordinate(0), 1.0, std::vector<double>{0.3},
                                      kUnit, 4, dt, RandomPlan{});
      EXPECT_NEAR(d.mean, std::exp(lambda), 5.0 * dt * std::exp(lambda));
    }
  }
}

TEST(DxUbar, RejectsZeroDirection) {
  const auto m = make_jump_ou_benchmark({});
  const auto abar = AveragedDrift::analytic(m).field();
  EXPECT_THROW(estimate_Dx_ubar(abar, m, Observable::tanh_sum(), 1.0, kX0,
                                std::vector<double>{0.0}, 10, 0.01, RandomPlan{}),
               InvalidInputError);
}

TEST(DxUbar, VariationAgreesWithFiniteDifference) {
  const auto m = make_jump_ou_benchmark({});
  const auto abar = AveragedDrift::analytic(m).field();
  const RandomPlan plan{12};
  const auto var = estimate_Dx_ubar(abar, m, Observable::tanh_sum(), 1.0, kX0, kUnit, 20000,
                                    0.01, plan);
  const auto fd = estimate_Dx_ubar_fd(abar, m, Observable::tanh_sum(), 1.0, kX0, kUnit, 20000,
                                      0.01, plan, 1e-3);
  EXPECT_NEAR(var.mean, fd.mean, 3.0 * combined_std_error(var, fd) + 1e-5);
  const auto grad = estimate_grad_ubar(abar, m, Observable::tanh_sum(), 1.0, kX0, 20000, 0.01,
                                       plan.derive(0));
  ASSERT_EQ(grad.size(), 1u);
  EXPECT_NEAR(grad[0].mean, var.mean, 3.0 * combined_std_error(grad[0], var));
}

TEST(GradientCache, ComputesOncePerCell) {
  GradientCache cache(1e-3);
  int calls = 0;
  auto compute = [&] {
    ++calls;
    return std::vector<MCEstimate>{{0.5, 0.01, 10}};
  };
  const auto a = cache.get(1.0, std::vector<double>{0.2001}, compute);
  const auto b = cache.get(1.0, std::vector<double>{0.2003}, compute);
  EXPECT_EQ(calls, 1);
  EXPECT_EQ(a[0].mean, b[0].mean);
  cache.get(0.5, std::vector<double>{0.2001}, compute);
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(cache.size(), 2u);
}

TEST(Rho, ZeroWhenDriftIgnoresFastState) {
  JumpOuParams p;
  p.gamma = 0.0;
  const auto m = make_jump_ou_benchmark(p);
  const auto abar = AveragedDrift::analytic(m).field();
  const auto r = estimate_rho(m, abar, Observable::tanh_sum(), 1.0, kX0,
                              std::vector<double>{3.0}, 200, 0.01, RandomPlan{});
  EXPECT_EQ(r.mean, 0.0);
  EXPECT_EQ(r.std_error, 0.0);
}

TEST(Rho, LinearReadClosedForm) {
  const auto m = make_jump_ou_benchmark({});
  const auto abar = AveragedDrift::analytic(m).field();
  const RandomPlan plan{1};
  const auto grad = estimate_grad_ubar(abar, m, Observable::tanh_sum(), 1.0, kX0, 2000, 0.01,
                                       plan);
  for (double y : {-1.0, 0.5, 1.2, 3.0}) {
    const auto r = rho_from_gradient(m, abar, kX0, std::vector<double>{y}, grad);
    EXPECT_NEAR(r.mean, (y - 1.2) * grad[0].mean, 1e-14);
    EXPECT_NEAR(r.std_error, std::abs(y - 1.2) * grad[0].std_error, 1e-14);
  }
  const auto direct = estimate_rho(m, abar, Observable::tanh_sum(), 1.0, kX0, kY0, 2000, 0.01,
                                   plan);
  EXPECT_NEAR(direct.mean, (0.5 - 1.2) * grad[0].mean, 1e-14);
}

TEST(U1, ZeroWhenDriftIgnoresFastState) {
  JumpOuParams p;
  p.gamma = 0.0;
  const auto m = make_jump_ou_benchmark(p);
  const auto abar = AveragedDrift::analytic(m).field();
  const auto u1 = estimate_u1(m, abar, Observable::tanh_sum(), 1.0, kX0, kY0, quick_u1(),
                              RandomPlan{});
  EXPECT_EQ(u1.value.mean, 0.0);
  EXPECT_EQ(u1.value.std_error, 0.0);
}

TEST(U1, RejectsShortTruncation) {
  const auto m = make_jump_ou_benchmark({});
  const auto abar = AveragedDrift::analytic(m).field();
  U1Settings s = quick_u1();
  s.S = 5.0;
  EXPECT_THROW(estimate_u1(m, abar, Observable::tanh_sum(), 1.0, kX0, kY0, s, RandomPlan{}),
               InvalidInputError);
}

TEST(U1, MatchesClosedFormWithSuppliedGradient) {
  // With the gradient fixed, u1 = gamma (y - m) D exactly in expectation.
  const auto m = make_jump_ou_benchmark({});
  const auto abar = AveragedDrift::analytic(m).field();
  const std::vector<MCEstimate> grad{{0.2, 0.0, 1}};
  U1Settings s = quick_u1();
  s.n_paths = 4000;
  const auto u1 = estimate_u1_with_gradient(m, abar, kX0, kY0, grad, s, RandomPlan{3});
  const double expected = (0.5 - 1.2) * 0.2;
  EXPECT_NEAR(u1.value.mean, expected, 3.0 * u1.value.std_error + u1.tail_bound);
  EXPECT_GT(u1.tail_bound, 0.0);
  EXPECT_LT(u1.tail_bound, 1e-3);
  EXPECT_NEAR(u1.beta_hat, 1.0, 1e-12);
  ASSERT_EQ(u1.centered_integral.size(), 1u);
  EXPECT_NEAR(u1.centered_integral[0].mean, 0.5 - 1.2,
              3.0 * u1.centered_integral[0].std_error + 0.01);
}

TEST(Residual, IdentityAndGammaZero) {
  JumpOuParams p;
  p.gamma = 0.0;
  const auto m = make_jump_ou_benchmark(p);
  const auto abar = AveragedDrift::analytic(m).field();
  ResidualSettings s;
  s.n0 = 500;
  s.u1 = quick_u1();
  const auto reports = residual_check(m, abar, Observable::tanh_sum(), kX0, kY0, {0.25, 0.125},
                                      s, RandomPlan{2});
  ASSERT_EQ(reports.size(), 2u);
  for (const auto& r : reports) {
    EXPECT_EQ(r.u1_hat.mean, 0.0);
    EXPECT_EQ(r.r_eps.mean, 0.0);
    EXPECT_EQ(r.r_eps.mean, r.u_eps.mean - r.u_bar.mean - r.epsilon * r.u1_hat.mean);
  }
  EXPECT_EQ(reports[1].n, 1000u);
  EXPECT_THROW(residual_check(m, abar, Observable::tanh_sum(), kX0, kY0, {0.25}, s, RandomPlan{}),
               InvalidInputError);
}

TEST(Residual, ExactArithmeticIdentity) {
  const auto m = make_jump_ou_benchmark({});
  const auto abar = AveragedDrift::analytic(m).field();
  ResidualSettings s;
  s.n0 = 500;
  s.u1 = quick_u1();
  const auto reports = residual_check(m, abar, Observable::tanh_sum(), kX0, kY0,
                                      {0.25, 0.125, 0.0625}, s, RandomPlan{5});
  for (const auto& r : reports) {
    EXPECT_EQ(r.r_eps.mean, r.u_eps.mean - r.u_bar.mean - r.epsilon * r.u1_hat.mean);
    EXPECT_NEAR(r.difference.mean, r.u_eps.mean - r.u_bar.mean, 1e-12);
    EXPECT_EQ(r.S, s.u1.S);
    EXPECT_NEAR(r.dt, 0.00625, 1e-15);
  }
}

TEST(Residual, BoundednessRule) {
  auto report = [](double eps, double r, double se) {
    ExpansionReport e;
    e.epsilon = eps;
    e.r_eps = {r, se, 100};
    return e;
  };
  // |r|/eps = 0.4, 0.5, 0.6: bounded.
  auto b = residual_boundedness({report(0.5, 0.2, 0.0), report(0.25, 0.125, 0.0),
                                 report(0.125, 0.075, 0.0)});
  EXPECT_TRUE(b.bounded);
  EXPECT_DOUBLE_EQ(b.max_lower, 0.6);
  EXPECT_DOUBLE_EQ(b.min_upper, 0.4);
  // |r|/eps grows like 1/eps: unbounded.
  b = residual_boundedness({report(0.5, 0.01, 0.0), report(0.25, 0.05, 0.0),
                            report(0.125, 0.1, 0.0)});
  EXPECT_FALSE(b.bounded);
  // The same growth hidden in noise passes after the stderr allowance.
  b = residual_boundedness({report(0.5, 0.01, 0.1), report(0.25, 0.05, 0.05),
                            report(0.125, 0.1, 0.03)});
  EXPECT_TRUE(b.bounded);
}
