#pragma once

#include <array>
#include <stdexcept>

namespace convseq {

using Vec3 = std::array<double, 3>;
/// Row-major 3x3.
using Mat3 = std::array<double, 9>;

class RotationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

Mat3 identity3();
Mat3 matmul(const Mat3& a, const Mat3& b);
Mat3 transpose(const Mat3& m);
double determinant(const Mat3& m);
Vec3 apply(const Mat3& m, const Vec3& v);
/// Largest absolute entry of R^T R - I.
double orthonormality_defect(const Mat3& r);

/// Rodrigues formula; below 1e-8 rad the second-order Taylor expansion is used.
Mat3 expmap_to_rotmat(const Vec3& r);

/// Euler decomposition used by the motion metric. For R = (Rz(c) Ry(b) Rx(a))^T the
/// result is (a, b, c) with b = -asin(R[0,2]). When |R[0,2]| = 1 (gimbal lock) the
/// third angle is fixed at 0. Throws RotationError if R is not orthonormal within tol.
Vec3 rotmat_to_euler(const Mat3& r, double tol = 1e-6);

/// Inverse of rotmat_to_euler: (Rz(c) Ry(b) Rx(a))^T.
Mat3 euler_to_rotmat(const Vec3& euler);

}  // namespace convseq
