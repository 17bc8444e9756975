#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "iidob/numerics.hpp"
#include "iidob/stiff.hpp"

using namespace iidob;

namespace {

Vec scalar(double v) { return Vec::Constant(1, v); }

}  // namespace

TEST(Rk4, ZeroFieldKeepsState) {
  Vec s(3);
  s << 1.0, -2.0, 3.5;
  const Vec out = rk4_step([](double, const Vec& x) { return Vec::Zero(x.size()); }, 0.0, s, 0.1);
  EXPECT_EQ(out, s);
}

TEST(Rk4, GrowthMatchesTaylorPolynomial) {
  const double h = 0.1;
  const Vec out = rk4_step([](double, const Vec& x) { return x; }, 0.0, scalar(1.0), h);
  const double taylor = 1.0 + h + h * h / 2.0 + h * h * h / 6.0 + h * h * h * h / 24.0;
  EXPECT_NEAR(out[0], taylor, 1e-15);
  EXPECT_NEAR(out[0], 1.1051708333333333, 1e-15);
}

// At dt = 1e-3 the global error at t = 1 is about 3e-15, level with the
// accumulated rounding of 1000 steps, so the order is measured one decade up.
TEST(Rk4, DecayConvergesAtFourthOrder) {
  auto error_at = [](double dt) {
    Vec x = scalar(1.0);
    const int steps = static_cast<int>(std::lround(1.0 / dt));
    for (int k = 0; k < steps; ++k) x = rk4_step([](double, const Vec& y) { return Vec(-y); }, k * dt, x, dt);
    return std::abs(x[0] - std::exp(-1.0));
  };
  const double order = std::log10(error_at(1e-1) / error_at(1e-2));
  EXPECT_GE(order, 3.9);
}

TEST(Rk4, NonFiniteDerivativeReportsStage) {
  try {
    rk4_step(
        [](double t, const Vec& x) {
          return t > 0.0 ? Vec::Constant(1, std::numeric_limits<double>::quiet_NaN()) : Vec(x);
        },
        0.0, scalar(1.0), 0.1);
    FAIL() << "expected StepError";
  } catch (const StepError& e) {
    EXPECT_EQ(e.stage(), 2);
  }
}

TEST(Rk4, RejectsNonPositiveStep) {
  EXPECT_THROW(rk4_step([](double, const Vec& x) { return x; }, 0.0, scalar(1.0), 0.0), ContractError);
}

TEST(GaussLegendre, ConstantIntegrand) {
  EXPECT_NEAR(quad_gl([](double) { return 1.0; }, 0.0, 3.0, QuadRule(16)), 3.0, 1e-14);
}

TEST(GaussLegendre, TwoNodesIntegrateCubicsExactly) {
  const QuadRule rule(2, 10.0);
  EXPECT_NEAR(quad_gl([](double t) { return t * t; }, 0.0, 1.0, rule), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(quad_gl([](double t) { return t * t * t; }, -1.0, 2.0, rule), 15.0 / 4.0, 1e-14);
}

TEST(GaussLegendre, OrientationSign) {
  EXPECT_NEAR(quad_gl([](double t) { return t; }, 1.0, 0.0, QuadRule(16)), -0.5, 1e-15);
}

TEST(GaussLegendre, WeightsSumToTwo) {
  for (int n : {2, 3, 7, 16, 31}) {
    const QuadRule rule(n);
    double s = 0.0;
    for (double w : rule.weights()) s += w;
    EXPECT_NEAR(s, 2.0, 1e-13) << n;
  }
}

TEST(GaussLegendre, CompositeRuleOnLongInterval) {
  const QuadRule rule(16, 1.0);
  EXPECT_EQ(rule.segments_for(0.0, 5.5), 6);
  EXPECT_NEAR(quad_gl([](double t) { return std::sin(t); }, 0.0, 10.0, rule), 1.0 - std::cos(10.0), 1e-13);
}

TEST(GaussLegendre, VectorIntegrand) {
  const Vec v = quad_gl(
      [](double t) {
        Vec r(2);
        r << t, std::exp(t);
        return r;
      },
      0.0, 1.0, QuadRule(16));
  EXPECT_NEAR(v[0], 0.5, 1e-15);
  EXPECT_NEAR(v[1], std::exp(1.0) - 1.0, 1e-14);
}

TEST(GaussLegendre, NonFiniteSampleCarriesLocation) {
  try {
    quad_gl([](double t) { return t > 0.5 ? std::numeric_limits<double>::infinity() : t; }, 0.0, 1.0, QuadRule(4));
    FAIL() << "expected QuadratureError";
  } catch (const QuadratureError& e) {
    EXPECT_GT(e.where(), 0.5);
  }
}

TEST(CentralDiff, ConstantHasZeroDerivative) {
  Vec p(2);
  p << 1.0, 2.0;
  EXPECT_EQ(central_diff([](const Vec&) { return 4.0; }, p, 0, 1e-6), 0.0);
}

TEST(CentralDiff, Square) {
  EXPECT_NEAR(central_diff([](const Vec& x) { return x[0] * x[0]; }, scalar(3.0), 0, 1e-6), 6.0, 1e-6);
}

TEST(CentralDiff, Product) {
  Vec p(2);
  p << 2.0, 5.0;
  EXPECT_NEAR(central_diff([](const Vec& x) { return x[0] * x[1]; }, p, 1, 1e-6), 2.0, 1e-6);
}

TEST(CentralDiff, NonFiniteSample) {
  EXPECT_THROW(central_diff([](const Vec& x) { return std::log(x[0]); }, scalar(0.0), 0, 1e-6),
               DifferentiationError);
}

TEST(CentralDiff, JacobianOfLinearMap) {
  Mat a(2, 3);
  a << 1, 2, 3, -4, 5, 6;
  Vec p(3);
  p << 0.3, -0.7, 2.0;
  const Mat j = central_jacobian([&](const Vec& x) { return Vec(a * x); }, p);
  EXPECT_LT((j - a).norm(), 1e-8);
}

TEST(Radau, StiffLinearDecayMatchesExponential) {
  // y' = -1e6 (y - cos t) - sin t has the smooth solution cos t.
  Vec y = scalar(1.0);
  const double h = 0.01;
  for (int k = 0; k < 100; ++k) {
    y = radau_step([](double t, const Vec& v) { return Vec::Constant(1, -1e6 * (v[0] - std::cos(t)) - std::sin(t)); },
                   k * h, y, h);
  }
  EXPECT_NEAR(y[0], std::cos(1.0), 1e-9);
}

TEST(Radau, HarmonicOscillatorIsAccurate) {
  Vec y(2);
  y << 1.0, 0.0;
  const double h = 0.05;
  RadauStats stats;
  for (int k = 0; k < 20; ++k) {
    y = radau_step([](double, const Vec& v) { Vec d(2); d << v[1], -v[0]; return d; }, k * h, y, h, {}, &stats);
  }
  EXPECT_NEAR(y[0], std::cos(1.0), 1e-8);
  EXPECT_NEAR(y[1], -std::sin(1.0), 1e-8);
  EXPECT_EQ(stats.halvings, 0);
}
