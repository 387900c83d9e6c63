// Statistical properties of the benchmark that need more samples than the
// unit suites can afford. Each bound is at least three standard errors.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "slowfast/ergodic.hpp"
#include "slowfast/expansion.hpp"
#include "slowfast/integrate.hpp"
#include "slowfast/model.hpp"
#include "slowfast/statistics.hpp"
#include "slowfast/weak_error.hpp"
#include "support.hpp"

using namespace slowfast;
using slowfast::testing::kX0;
using slowfast::testing::kY0;

namespace {

const CoefficientModel& benchmark() {
  static const CoefficientModel m = make_jump_ou_benchmark({});
  return m;
}

DriftField analytic_abar() { return AveragedDrift::analytic(benchmark()).field(); }

struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

Moments moments(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  const double mean = s / v.size();
  double q = 0.0;
  for (double x : v) q += (x - mean) * (x - mean);
  return {mean, std::sqrt(q / (v.size() - 1) / v.size())};
}

}  // namespace

TEST(Frozen, EnsembleMeanOfDriftIsAveragedDrift) {
  AbarSettings s;
  s.method = AbarMethod::kEnsemble;
  s.horizon = 15.0;
  s.n_paths = 40000;
  for (double x : {0.0, 1.0}) {
    const auto est = estimate_abar(benchmark(), std::vector<double>{x}, s, RandomPlan{21});
    std::vector<double> exact(1);
    analytic_abar()(std::vector<double>{x}, exact);
    EXPECT_NEAR(est.value[0], exact[0], 3.0 * est.std_error[0] + 1e-3) << "x = " << x;
  }
}

TEST(Frozen, SecondMomentDecreasesFromLargeStart) {
  const std::vector<double> x{0.0};
  const std::vector<double> y0{6.0};
  std::vector<Moments> m;
  for (double t : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    std::vector<double> sq(4000);
    const RandomPlan plan{22};
    for (std::size_t i = 0; i < sq.size(); ++i) {
      const auto y = frozen_state_at(benchmark(), x, y0, t, 0.01, plan.for_sample(i));
      sq[i] = y[0] * y[0];
    }
    m.push_back(moments(sq));
  }
  for (std::size_t k = 1; k < m.size(); ++k) {
    EXPECT_LE(m[k].mean, m[k - 1].mean + 3.0 * std::hypot(m[k].se, m[k - 1].se)) << k;
  }
  EXPECT_NEAR(m.back().mean, 1.585, 3.0 * m.back().se + 0.02);

  // E|Y_t|^2 <= C (1 + |x|^2 + e^{-beta t} |y|^2) with beta = 1; fit C as the
  // largest ratio and check it is moderate.
  const double ts[] = {0.5, 1.0, 2.0, 4.0, 8.0};
  double c = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    c = std::max(c, m[k].mean / (1.0 + std::exp(-ts[k]) * y0[0] * y0[0]));
  }
  EXPECT_LT(c, 2.0);
}

TEST(Coupled, MomentsBoundedAsEpsilonShrinks) {
  std::vector<Moments> mx, my;
  for (int k = 0; k <= 8; ++k) {
    const double eps = std::ldexp(1.0, -k);
    const ScaleParams scale{eps, 1.0, 0.1 * eps, 0.1};
    const RandomPlan plan = RandomPlan{23}.derive(k);
    std::vector<double> x2(10000), y2(10000);
    for (std::size_t i = 0; i < x2.size(); ++i) {
      const auto r = simulate_coupled(benchmark(), scale, kX0, kY0, plan.for_sample(i));
      x2[i] = r.x_T[0] * r.x_T[0];
      y2[i] = r.y_T[0] * r.y_T[0];
    }
    mx.push_back(moments(x2));
    my.push_back(moments(y2));
  }
  for (std::size_t k = 1; k < mx.size(); ++k) {
    EXPECT_LE(mx[k].mean, 2.0 * mx[0].mean) << "eps = 2^-" << k;
    EXPECT_LE(my[k].mean, 2.0 * my[0].mean) << "eps = 2^-" << k;
  }
}

TEST(Variation, SecondMomentStableUnderStepHalving) {
  const auto abar = analytic_abar();
  const std::vector<double> dir{1.0};
  std::vector<Moments> m;
  for (double dt : {0.01, 0.005}) {
    std::vector<double> sq(10000);
    const RandomPlan plan{24};
    for (std::size_t i = 0; i < sq.size(); ++i) {
      const auto r = simulate_first_variation(abar, benchmark(), kX0, dir, 1.0, dt,
                                              plan.for_sample(i));
      sq[i] = r.eta_T[0] * r.eta_T[0];
    }
    m.push_back(moments(sq));
  }
  EXPECT_TRUE(std::isfinite(m[0].mean));
  EXPECT_NEAR(m[0].mean, m[1].mean, 0.1 * m[1].mean);
}

TEST(StrongError, HalfOrderRatio) {
  const auto abar = analytic_abar();
  std::vector<MCEstimate> e;
  for (int k : {4, 5}) {
    const double eps = std::ldexp(1.0, -k);
    const ScaleParams scale{eps, 1.0, 0.1 * std::ldexp(1.0, -5), 0.1};
    e.push_back(strong_error(benchmark(), abar, scale, kX0, kY0, 100000, RandomPlan{25}.derive(k)));
  }
  const double ratio = e[0].mean / e[1].mean;
  EXPECT_GE(ratio, 1.2);
  EXPECT_LE(ratio, 1.7);
}

TEST(WeakError, StableUnderStepHalving) {
  const auto abar = analytic_abar();
  const double eps = 0.125;
  std::vector<MCEstimate> e;
  for (double dt : {0.1 * eps, 0.05 * eps}) {
    const ScaleParams scale{eps, 1.0, dt, 0.1};
    e.push_back(weak_error(benchmark(), abar, scale, kX0, kY0, Observable::tanh_sum(), 40000,
                           RandomPlan{26}));
  }
  EXPECT_NEAR(e[0].mean, e[1].mean, 3.0 * combined_std_error(e[0], e[1]) + 0.05 * eps);
}

TEST(EstimatedDrift, LipschitzInSlowState) {
  JumpOuParams p;
  p.bounded_read = true;
  const auto m = make_jump_ou_benchmark(p);
  AbarSettings s;
  s.n_paths = 8;
  std::vector<AbarEstimate> est;
  const std::vector<double> xs{-1.0, -0.5, 0.0, 0.5, 1.0};
  for (double x : xs) est.push_back(estimate_abar(m, std::vector<double>{x}, s, RandomPlan{27}));
  // |d abar/dx| <= |cos x| + gamma sup|tanh'| <= 2.
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const double se = std::hypot(est[i].std_error[0], est[i - 1].std_error[0]);
    EXPECT_LE(std::abs(est[i].value[0] - est[i - 1].value[0]), 2.0 * (xs[i] - xs[i - 1]) + 3 * se);
  }
}

TEST(EstimatedDrift, DoublingHorizonIsWithinNoise) {
  AbarSettings s;
  s.n_paths = 16;
  const auto a = estimate_abar(benchmark(), std::vector<double>{0.5}, s, RandomPlan{28});
  s.horizon = 200.0;
  const auto b = estimate_abar(benchmark(), std::vector<double>{0.5}, s, RandomPlan{29});
  EXPECT_NEAR(a.value[0], b.value[0], 3.0 * std::hypot(a.std_error[0], b.std_error[0]));
}

TEST(U1, DoublingTruncationIsWithinNoise) {
  const std::vector<MCEstimate> grad{{0.2, 0.0, 1}};
  U1Settings s;
  s.n_paths = 4000;
  s.dt_frozen = 0.02;
  const auto a = estimate_u1_with_gradient(benchmark(), analytic_abar(), kX0, kY0, grad, s,
                                           RandomPlan{30});
  s.S = 40.0;
  const auto b = estimate_u1_with_gradient(benchmark(), analytic_abar(), kX0, kY0, grad, s,
                                           RandomPlan{31});
  EXPECT_NEAR(a.value.mean, b.value.mean,
              3.0 * combined_std_error(a.value, b.value) + a.tail_bound + b.tail_bound);
  EXPECT_LT(b.tail_bound, a.tail_bound);
}

TEST(U1, LinearInFastStart) {
  // u1(y) = gamma (y - m) D: slope in y is the gradient, whatever m is.
  const auto abar = analytic_abar();
  U1Settings s;
  s.n_paths = 4000;
  s.n_derivative = 20000;
  s.dt_frozen = 0.02;
  s.dt_averaged = 0.01;
  const RandomPlan plan{32};
  std::vector<U1Estimate> u;
  const std::vector<double> ys{-1.0, 0.5, 2.0};
  for (double y : ys) {
    u.push_back(estimate_u1(benchmark(), abar, Observable::tanh_sum(), 1.0, kX0,
                            std::vector<double>{y}, s, plan));
  }
  const double d = u[0].gradient[0].mean;
  for (std::size_t i = 1; i < ys.size(); ++i) {
    const double slope = (u[i].value.mean - u[0].value.mean) / (ys[i] - ys[0]);
    const double se = combined_std_error(u[i].value, u[0].value) / (ys[i] - ys[0]);
    EXPECT_NEAR(slope, d, 3.0 * se + 0.05 * std::abs(d)) << "y = " << ys[i];
  }
}
