#include "convseq/rotation.h"

#include <algorithm>
#include <cmath>

namespace convseq {

Mat3 identity3() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

Mat3 matmul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return c;
}

Mat3 transpose(const Mat3& m) { return {m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}; }

double determinant(const Mat3& m) {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Vec3 apply(const Mat3& m, const Vec3& v) {
  return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2], m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
          m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

double orthonormality_defect(const Mat3& r) {
  const Mat3 rtr = matmul(transpose(r), r);
  const Mat3 id = identity3();
  double worst = 0;
  for (int i = 0; i < 9; ++i) worst = std::max(worst, std::abs(rtr[i] - id[i]));
  return worst;
}

Mat3 expmap_to_rotmat(const Vec3& r) {
  const double theta2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
  const double theta = std::sqrt(theta2);
  double a, b;  // sin(t)/t and (1 - cos(t))/t^2
  if (theta < 1e-8) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  const Mat3 k{0, -r[2], r[1], r[2], 0, -r[0], -r[1], r[0], 0};
  const Mat3 k2 = matmul(k, k);
  Mat3 out = identity3();
  for (int i = 0; i < 9; ++i) out[i] += a * k[i] + b * k2[i];
  return out;
}

Vec3 rotmat_to_euler(const Mat3& r, double tol) {
  if (orthonormality_defect(r) > tol || std::abs(determinant(r) - 1.0) > tol) {
    throw RotationError("rotmat_to_euler: matrix is not a rotation within tolerance");
  }
  const double r02 = std::clamp(r[2], -1.0, 1.0);
  if (std::abs(r02) >= 1.0 - 1e-12) {
    // Only a - c (or a + c) is observable; c is pinned to 0.
    if (r02 < 0) return {std::atan2(r[3], r[4]), M_PI / 2, 0.0};
    return {std::atan2(-r[3], r[4]), -M_PI / 2, 0.0};
  }
  const double e2 = -std::asin(r02);
  const double c = std::cos(e2);
  const double e1 = std::atan2(r[5] / c, r[8] / c);
  const double e3 = std::atan2(r[1] / c, r[0] / c);
  return {e1, e2, e3};
}

Mat3 euler_to_rotmat(const Vec3& e) {
  const double ca = std::cos(e[0]), sa = std::sin(e[0]);
  const double cb = std::cos(e[1]), sb = std::sin(e[1]);
  const double cc = std::cos(e[2]), sc = std::sin(e[2]);
  const Mat3 rx{1, 0, 0, 0, ca, -sa, 0, sa, ca};
  const Mat3 ry{cb, 0, sb, 0, 1, 0, -sb, 0, cb};
  const Mat3 rz{cc, -sc, 0, sc, cc, 0, 0, 0, 1};
  return transpose(matmul(rz, matmul(ry, rx)));
}

}  // namespace convseq
