#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "convseq/rotation.h"

using namespace convseq;

namespace {

Mat3 rx(double a) { return {1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a)}; }
Mat3 ry(double a) { return {std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a)}; }
Mat3 rz(double a) { return {std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1}; }

double max_diff(const Mat3& a, const Mat3& b) {
  double m = 0;
  for (std::size_t i = 0; i < 9; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Vec3 random_expmap(std::mt19937_64& gen, double max_angle) {
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> u(0, max_angle);
  Vec3 axis{n(gen), n(gen), n(gen)};
  const double len = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
  const double angle = u(gen);
  return {axis[0] / len * angle, axis[1] / len * angle, axis[2] / len * angle};
}

}  // namespace

TEST(Rotation, ZeroExpmapIsIdentity) { EXPECT_EQ(expmap_to_rotmat({0, 0, 0}), identity3()); }

TEST(Rotation, QuarterTurnAboutX) {
  const Mat3 r = expmap_to_rotmat({std::numbers::pi / 2, 0, 0});
  const Vec3 v = apply(r, {0, 1, 0});
  EXPECT_NEAR(v[0], 0, 1e-15);
  EXPECT_NEAR(v[1], 0, 1e-15);
  EXPECT_NEAR(v[2], 1, 1e-15);
  EXPECT_LT(max_diff(r, rx(std::numbers::pi / 2)), 1e-15);
}

TEST(Rotation, MatchesAxisAngleConstruction) {
  // Rotation about the z axis by 0.8 rad must equal the elementary Rz.
  EXPECT_LT(max_diff(expmap_to_rotmat({0, 0, 0.8}), rz(0.8)), 1e-15);
  EXPECT_LT(max_diff(expmap_to_rotmat({0, -1.1, 0}), ry(-1.1)), 1e-15);
}

TEST(Rotation, SmallAngleBranchIsContinuous) {
  const Vec3 tiny{3e-9, -2e-9, 1e-9};
  const Vec3 larger{3e-7, -2e-7, 1e-7};
  const Mat3 a = expmap_to_rotmat(tiny), b = expmap_to_rotmat(larger);
  EXPECT_LT(orthonormality_defect(a), 1e-15);
  // First-order term: R ~ I + [r]x
  EXPECT_NEAR(a[5], -tiny[0], 1e-17);
  EXPECT_NEAR(b[5], -larger[0], 1e-13);
}

TEST(Rotation, RandomExpmapsAreProperRotations) {
  std::mt19937_64 gen(17);
  for (int i = 0; i < 10000; ++i) {
    const Mat3 r = expmap_to_rotmat(random_expmap(gen, 3 * std::numbers::pi));
    ASSERT_LT(orthonormality_defect(r), 1e-9);
    ASSERT_NEAR(determinant(r), 1.0, 1e-9);
  }
}

TEST(Euler, IdentityGivesZeros) {
  const Vec3 e = rotmat_to_euler(identity3());
  for (double v : e) EXPECT_EQ(v, 0.0);
}

TEST(Euler, RecoversKnownAngles) {
  const Vec3 angles{0.3, -0.4, 1.2};
  const Mat3 r = transpose(matmul(matmul(rz(angles[2]), ry(angles[1])), rx(angles[0])));
  const Vec3 e = rotmat_to_euler(r);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(e[i], angles[i], 1e-12);
  EXPECT_LT(max_diff(euler_to_rotmat(angles), r), 1e-15);
}

TEST(Euler, RoundTripOnRandomRotations) {
  std::mt19937_64 gen(23);
  for (int i = 0; i < 10000; ++i) {
    const Mat3 r = expmap_to_rotmat(random_expmap(gen, std::numbers::pi));
    ASSERT_LT(max_diff(euler_to_rotmat(rotmat_to_euler(r)), r), 1e-6);
  }
}

TEST(Euler, GimbalLockIsFiniteAndRecomposes) {
  for (double b : {std::numbers::pi / 2, -std::numbers::pi / 2}) {
    for (double a : {0.0, 0.4, -1.3}) {
      for (double c : {0.0, 0.7, 2.0}) {
        const Mat3 r = euler_to_rotmat({a, b, c});
        const Vec3 e = rotmat_to_euler(r);
        for (double v : e) ASSERT_TRUE(std::isfinite(v));
        EXPECT_EQ(e[2], 0.0);
        EXPECT_LT(max_diff(euler_to_rotmat(e), r), 1e-9);
      }
    }
  }
  // Exact gimbal rows built by hand: R[0,2] = -1 and +1.
  const Mat3 down{0, 0, -1, 0, 1, 0, 1, 0, 0};
  const Mat3 up{0, 0, 1, 0, 1, 0, -1, 0, 0};
  for (const Mat3& r : {down, up}) {
    const Vec3 e = rotmat_to_euler(r);
    for (double v : e) EXPECT_TRUE(std::isfinite(v));
    EXPECT_LT(max_diff(euler_to_rotmat(e), r), 1e-12);
  }
}

TEST(Euler, RejectsNonOrthonormal) {
  Mat3 r = identity3();
  r[0] = 1.01;
  EXPECT_THROW(rotmat_to_euler(r), RotationError);
  r[0] = 1 + 1e-8;
  EXPECT_NO_THROW(rotmat_to_euler(r));
}
