#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "slowfast/error.hpp"
#include "slowfast/model.hpp"
#include "support.hpp"

using namespace slowfast;
using slowfast::testing::ScalarModel;

namespace {

double abar_at(const CoefficientModel& m, double x) {
  std::vector<double> xs{x}, out(1);
  m.abar_analytic(xs, out);
  return out[0];
}

}  // namespace

TEST(JumpOu, AnalyticAbarAtZero) {
  const auto m = make_jump_ou_benchmark({});
  EXPECT_DOUBLE_EQ(abar_at(m, 0.0), 1.2);
  EXPECT_EQ(m.dims().n, 1u);
  EXPECT_EQ(m.dims().m, 1u);
  EXPECT_EQ(m.dims().d1, 1u);
  EXPECT_EQ(m.dims().d2, 1u);
}

TEST(JumpOu, NoFastJumpsGivesSinPlusCos) {
  JumpOuParams p;
  p.kappa = 0.0;
  const auto m = make_jump_ou_benchmark(p);
  EXPECT_DOUBLE_EQ(abar_at(m, 0.0), 1.0);
  for (double x : {-1.3, 0.4, 2.0}) EXPECT_NEAR(abar_at(m, x), std::sin(x) + std::cos(x), 1e-15);
}

TEST(JumpOu, GammaZeroAbarEqualsA) {
  JumpOuParams p;
  p.gamma = 0.0;
  const auto m = make_jump_ou_benchmark(p);
  std::vector<double> a(1);
  for (double x : {-2.0, 0.0, 0.7}) {
    for (double y : {-3.0, 0.5, 4.0}) {
      m.a(std::vector<double>{x}, std::vector<double>{y}, a);
      EXPECT_EQ(a[0], abar_at(m, x));
    }
  }
}

TEST(JumpOu, CoefficientShapes) {
  const auto m = make_jump_ou_benchmark({});
  std::vector<double> x{0.3}, y{-0.4}, o(1);
  m.f(x, y, o);
  EXPECT_DOUBLE_EQ(o[0], -(y[0] - std::cos(x[0])));
  m.g(x, y, o);
  EXPECT_EQ(o[0], 0.5);
  m.h(x, y, o);
  EXPECT_EQ(o[0], 0.2);
  m.b(x, o);
  EXPECT_EQ(o[0], 0.3);
  m.c(x, o);
  EXPECT_EQ(o[0], 0.2);
  m.a(x, y, o);
  EXPECT_DOUBLE_EQ(o[0], std::sin(0.3) - 0.4);
}

TEST(JumpOu, BoundedReadHasNoAnalyticAbar) {
  JumpOuParams p;
  p.bounded_read = true;
  const auto m = make_jump_ou_benchmark(p);
  EXPECT_FALSE(m.has_analytic_abar());
  std::vector<double> o(1);
  m.a(std::vector<double>{0.0}, std::vector<double>{100.0}, o);
  EXPECT_DOUBLE_EQ(o[0], 1.0);
  EXPECT_THROW(m.abar_analytic(std::vector<double>{0.0}, o), InvalidModelError);
}

TEST(JumpOu, RejectsNonpositiveSigma) {
  JumpOuParams p;
  p.sigma = 0.0;
  EXPECT_THROW(make_jump_ou_benchmark(p), InvalidModelError);
  p.sigma = -1.0;
  EXPECT_THROW(make_jump_ou_benchmark(p), InvalidModelError);
  p.sigma = 0.5;
  p.lambda1 = -1.0;
  EXPECT_THROW(make_jump_ou_benchmark(p), InvalidModelError);
}

TEST(MakeModel, LooksUpByName) {
  const auto m = make_model("jump_ou", {{"gamma", 2.0}, {"kappa", 0.0}});
  EXPECT_DOUBLE_EQ(abar_at(m, 0.0), 2.0);
  EXPECT_THROW(make_model("nope", {}), InvalidModelError);
  EXPECT_THROW(make_model("jump_ou", {{"zeta", 1.0}}), InvalidModelError);
}

TEST(CoefficientModel, RejectsMissingCoefficients) {
  ModelDefinition d;
  d.name = "broken";
  EXPECT_THROW(CoefficientModel{d}, InvalidModelError);
}

TEST(Dissipativity, BenchmarkBetaIsOneOnAnyProbe) {
  const auto m = make_jump_ou_benchmark({});
  auto r = check_dissipativity(m, default_dissipativity_probe(m.dims()));
  ASSERT_TRUE(r.beta_hat);
  EXPECT_NEAR(*r.beta_hat, 1.0, 1e-13);
  EXPECT_TRUE(r.violations.empty());

  DissipativityProbe probe;
  probe.x_points = {{0.0}, {1.5}, {-2.5}};
  probe.y_pairs = {{{-10.0}, {10.0}}, {{0.1}, {0.2}}, {{3.0}, {-1.0}}};
  r = check_dissipativity(m, probe);
  EXPECT_NEAR(*r.beta_hat, 1.0, 1e-13);
}

TEST(Dissipativity, ConstantJumpCoefficientContributesNothing) {
  JumpOuParams p;
  p.kappa = 0.0;
  p.lambda2 = 0.0;
  const auto base = make_jump_ou_benchmark(p);
  p.kappa = 0.7;
  p.lambda2 = 3.0;
  const auto with_jumps = make_jump_ou_benchmark(p);
  const auto probe = default_dissipativity_probe(base.dims(), 16);
  EXPECT_EQ(*check_dissipativity(base, probe).beta_hat,
            *check_dissipativity(with_jumps, probe).beta_hat);
}

TEST(Dissipativity, ExpandingDriftViolatesEveryPair) {
  ScalarModel sm;
  sm.f = [](double, double y) { return y; };
  sm.g = [](double, double) { return 1.0; };
  sm.h = [](double, double) { return 0.3; };
  sm.lambda2 = 1.0;
  const auto m = sm.build();
  const auto probe = default_dissipativity_probe(m.dims(), 8);
  const auto r = check_dissipativity(m, probe);
  EXPECT_EQ(r.violations.size(), probe.x_points.size() * probe.y_pairs.size());
  EXPECT_LT(*r.beta_hat, 0.0);
  for (const auto& v : r.violations) EXPECT_EQ(v.assumption, "A3");
}

TEST(Dissipativity, RejectsEmptyOrDegenerateProbe) {
  const auto m = make_jump_ou_benchmark({});
  EXPECT_THROW(check_dissipativity(m, {}), InvalidInputError);
  DissipativityProbe same;
  same.x_points = {{0.0}};
  same.y_pairs = {{{1.0}, {1.0}}};
  EXPECT_THROW(check_dissipativity(m, same), InvalidInputError);
}

TEST(Nondegeneracy, ScalarSigmaSquared) {
  JumpOuParams p;
  p.sigma = 0.7;
  const auto m = make_jump_ou_benchmark(p);
  const auto r = check_nondegeneracy(m, default_nondegeneracy_probe(m.dims()));
  EXPECT_NEAR(*r.alpha_hat, 0.49, 1e-15);
  EXPECT_TRUE(r.violations.empty());
}

TEST(Nondegeneracy, ZeroDiffusionIsViolation) {
  ScalarModel sm;
  const auto m = sm.build();
  const auto r = check_nondegeneracy(m, default_nondegeneracy_probe(m.dims(), 4));
  EXPECT_EQ(*r.alpha_hat, 0.0);
  EXPECT_FALSE(r.violations.empty());
  EXPECT_EQ(r.violations.front().assumption, "A2");
}

TEST(Nondegeneracy, DiagonalTwoByTwo) {
  ModelDefinition d;
  d.name = "diag";
  d.dims = {1, 2, 1, 2};
  d.a = [](ConstVec, ConstVec, MutVec o) { o[0] = 0.0; };
  d.b = [](ConstVec, MutVec o) { o[0] = 0.0; };
  d.c = [](ConstVec, MutVec o) { o[0] = 0.0; };
  d.f = [](ConstVec, ConstVec y, MutVec o) { o[0] = -y[0]; o[1] = -y[1]; };
  d.g = [](ConstVec, ConstVec, MutVec o) { o[0] = 1.0; o[1] = 0.0; o[2] = 0.0; o[3] = 2.0; };
  d.h = [](ConstVec, ConstVec, MutVec o) { o[0] = 0.0; o[1] = 0.0; };
  const CoefficientModel m(d);
  const auto r = check_nondegeneracy(m, default_nondegeneracy_probe(m.dims(), 8));
  EXPECT_NEAR(*r.alpha_hat, 1.0, 1e-12);
  EXPECT_TRUE(r.violations.empty());
}

TEST(Nondegeneracy, RejectsEmptyProbe) {
  EXPECT_THROW(check_nondegeneracy(make_jump_ou_benchmark({}), {}), InvalidInputError);
}

TEST(Assumptions, ReportInvariantOnBenchmark) {
  const auto r = check_assumptions(make_jump_ou_benchmark({}));
  ASSERT_TRUE(r.alpha_hat && r.beta_hat);
  EXPECT_GT(*r.alpha_hat, 0.0);
  EXPECT_GT(*r.beta_hat, 0.0);
  EXPECT_TRUE(r.violations.empty());
}

TEST(LipschitzProbe, FiniteAndStableUnderRefinement) {
  for (bool bounded : {false, true}) {
    JumpOuParams p;
    p.bounded_read = bounded;
    const auto m = make_jump_ou_benchmark(p);
    const auto coarse = lipschitz_probe(m, default_nondegeneracy_probe(m.dims(), 64));
    const auto fine = lipschitz_probe(m, default_nondegeneracy_probe(m.dims(), 256));
    ASSERT_EQ(coarse.size(), 6u);
    for (const auto& [name, value] : coarse) {
      ASSERT_TRUE(std::isfinite(value)) << name;
      const double other = fine.at(name);
      if (value == 0.0) {
        EXPECT_LT(other, 1e-8) << name;
      } else {
        EXPECT_NEAR(other / value, 1.0, 0.1) << name;
      }
    }
  }
}

TEST(HaltonPoints, InRangeAndDistinct) {
  const auto pts = halton_points(50, 2, -3.0, 3.0);
  ASSERT_EQ(pts.size(), 50u);
  for (const auto& p : pts) {
    for (double v : p) {
      EXPECT_GE(v, -3.0);
      EXPECT_LE(v, 3.0);
    }
  }
  EXPECT_NE(pts[0], pts[1]);
}
