#include <cmath>

#include <gtest/gtest.h>

#include "iidob/scenarios.hpp"
#include "iidob/tracking.hpp"

using namespace iidob;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST(DesiredInput, VanishesOnReference) {
  const Vec x = v2(0.5, 1.5);
  const Vec f = v2(1.0, -2.0);
  EXPECT_LT(desired_input(f, Mat::Identity(2, 2), x, x, f, 1.3, v2(0, 0), TrackingParams{}).norm(), 1e-15);
}

TEST(DesiredInput, Example1AtOrigin) {
  // x = 0, x_d = (0, 2), x_d' = (2, 0): e_x = (0, -2), r = 1 gives
  // u_d = -(f + 50.5 e_x - x_d') = (2, 101).
  const SystemModel m = polynomial_model();
  const Vec x = v2(0, 0);
  const Vec ud = desired_input(m.f(x), m.g(x), x, v2(0, 2), v2(2, 0), 1.0, v2(0, 0), TrackingParams{50, 50, 1e-3});
  EXPECT_NEAR(ud[0], 2.0, 1e-12);
  EXPECT_NEAR(ud[1], 101.0, 1e-12);
}

TEST(Surface, RateExample) {
  EXPECT_EQ(surface_rhs(SurfaceState{v2(0, 0)}, v2(1, 0), 0.001), v2(1000, 0));
  EXPECT_EQ(surface_rhs(SurfaceState{v2(3, 4)}, v2(3, 4), 0.001), v2(0, 0));
}

TEST(NominalRate, ZeroAtEquilibrium) {
  const Vec u = v2(1.5, -0.5);
  const Vec x = v2(0.2, 0.1);
  EXPECT_EQ(nominal_v(Mat::Identity(2, 2), x, x, u, SurfaceState{u}, u, TrackingParams{}), v2(0, 0));
}

TEST(NominalRate, Composition) {
  const TrackingParams p{50, 7, 0.01};
  Mat g(2, 2);
  g << 1, 2, 0, 3;
  const Vec x = v2(1, 1), xd = v2(0, 2), u = v2(1, 1), udf = v2(0, 1), ud = v2(2, 2);
  const Vec expect = -7.0 * (u - udf) + (ud - udf) / 0.01 - g.transpose() * (x - xd);
  EXPECT_LT((nominal_v(g, x, xd, u, SurfaceState{udf}, ud, p) - expect).norm(), 1e-12);
}

TEST(PseudoInverse, TallMatrixIsLeftInverse) {
  Mat g(4, 2);
  g << 0, 0, 0, 0, 2, 1, 1, 3;
  const Mat pinv = pseudo_inverse(g);
  EXPECT_LT((pinv * g - Mat::Identity(2, 2)).norm(), 1e-12);
}

TEST(PseudoInverse, RankDeficientReportsCondition) {
  Mat g(2, 2);
  g << 1, 2, 2, 4;
  try {
    pseudo_inverse(g);
    FAIL() << "expected ControllerError";
  } catch (const ControllerError& e) {
    EXPECT_GT(e.condition(), kConditionLimit);
  }
}
