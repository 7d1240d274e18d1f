#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace sslam {

/// Rotation matrix of a (not necessarily unit) quaternion, defined as the
/// standard unit-quaternion formula applied after normalization. Every
/// quaternion-to-matrix conversion on a differentiated path goes through
/// this so analytic gradients and finite differences of raw coefficients
/// agree.
inline Eigen::Matrix3d quat_to_rotation(const Eigen::Vector4d& coeffs) {
  const Eigen::Vector4d q = coeffs.normalized();  // (x, y, z, w)
  const double x = q[0], y = q[1], z = q[2], w = q[3];
  Eigen::Matrix3d rot;
  rot << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
      2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
      2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
  return rot;
}

/// Pulls a gradient w.r.t. the rotation matrix back to the raw quaternion
/// coefficients (x, y, z, w), including the normalization Jacobian. The
/// result is tangent to the unit sphere when |coeffs| = 1.
inline Eigen::Vector4d quat_rotation_backward(const Eigen::Vector4d& coeffs,
                                              const Eigen::Matrix3d& g_rot) {
  const double norm = coeffs.norm();
  const Eigen::Vector4d q = coeffs / norm;
  const double x = q[0], y = q[1], z = q[2], w = q[3];

  Eigen::Matrix3d dx, dy, dz, dw;
  dx << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
  dy << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
  dz << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
  dw << 0, -z, y, z, 0, -x, -y, x, 0;

  Eigen::Vector4d g;
  g[0] = 2.0 * (g_rot.array() * dx.array()).sum();
  g[1] = 2.0 * (g_rot.array() * dy.array()).sum();
  g[2] = 2.0 * (g_rot.array() * dz.array()).sum();
  g[3] = 2.0 * (g_rot.array() * dw.array()).sum();

  // d(q/|q|)/dq = (I - q q^T) / |q|
  return (g - q * q.dot(g)) / norm;
}

/// Matrix L(a) with (a ⊗ p).coeffs = L(a) * p.coeffs, coefficient order
/// (x, y, z, w).
inline Eigen::Matrix4d quat_left_product_matrix(const Eigen::Quaterniond& a) {
  const double x = a.x(), y = a.y(), z = a.z(), w = a.w();
  Eigen::Matrix4d m;
  m << w, -z, y, x,
      z, w, -x, y,
      -y, x, w, z,
      -x, -y, -z, w;
  return m;
}

/// Matrix R(b) with (q ⊗ b).coeffs = R(b) * q.coeffs.
inline Eigen::Matrix4d quat_right_product_matrix(const Eigen::Quaterniond& b) {
  const double x = b.x(), y = b.y(), z = b.z(), w = b.w();
  Eigen::Matrix4d m;
  m << w, z, -y, x,
      -z, w, x, y,
      y, -x, w, z,
      -x, -y, -z, w;
  return m;
}

/// Projects a gradient onto the tangent of the unit sphere at q.
inline Eigen::Vector4d tangent_project(const Eigen::Vector4d& q, const Eigen::Vector4d& g) {
  const Eigen::Vector4d qn = q.normalized();
  return g - qn * qn.dot(g);
}

}  // namespace sslam
