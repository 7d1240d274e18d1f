#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace sslam {

/// Rigid-body transform x' = R(q) * x + t with the rotation stored as a unit
/// quaternion. Composition and inversion renormalize so the unit-norm
/// invariant survives long chains.
template <typename Scalar>
struct Pose {
  Eigen::Quaternion<Scalar> q = Eigen::Quaternion<Scalar>::Identity();
  Eigen::Vector3<Scalar> t = Eigen::Vector3<Scalar>::Zero();

  static Pose Identity() { return {}; }

  Eigen::Matrix3<Scalar> rotation() const { return q.toRotationMatrix(); }

  Eigen::Matrix4<Scalar> matrix() const {
    Eigen::Matrix4<Scalar> m = Eigen::Matrix4<Scalar>::Identity();
    m.template topLeftCorner<3, 3>() = rotation();
    m.template topRightCorner<3, 1>() = t;
    return m;
  }

  Eigen::Vector3<Scalar> apply(const Eigen::Vector3<Scalar>& p) const {
    return q * p + t;
  }

  Eigen::Vector3<Scalar> rotate(const Eigen::Vector3<Scalar>& v) const {
    return q * v;
  }
};

using Posed = Pose<double>;
using Posef = Pose<float>;

template <typename Scalar>
Pose<Scalar> compose(const Pose<Scalar>& a, const Pose<Scalar>& b) {
  Pose<Scalar> out;
  out.q = a.q * b.q;
  out.q.normalize();
  out.t = a.q * b.t + a.t;
  return out;
}

template <typename Scalar>
Pose<Scalar> inverse(const Pose<Scalar>& p) {
  Pose<Scalar> out;
  out.q = p.q.conjugate();
  out.t = -(out.q * p.t);
  return out;
}

template <typename Scalar>
Pose<Scalar> pose_from_matrix(const Eigen::Matrix4<Scalar>& m) {
  Pose<Scalar> out;
  out.q = Eigen::Quaternion<Scalar>(Eigen::Matrix3<Scalar>(m.template topLeftCorner<3, 3>()));
  out.q.normalize();
  out.t = m.template topRightCorner<3, 1>();
  return out;
}

template <typename Scalar>
Pose<Scalar> pose_from_axis_angle(const Eigen::Vector3<Scalar>& axis, Scalar angle,
                                  const Eigen::Vector3<Scalar>& t = Eigen::Vector3<Scalar>::Zero()) {
  Pose<Scalar> out;
  out.q = Eigen::Quaternion<Scalar>(Eigen::AngleAxis<Scalar>(angle, axis.normalized()));
  out.t = t;
  return out;
}

/// Rotation angle of a ∘ b⁻¹ in radians; zero iff the rotations agree.
template <typename Scalar>
Scalar rotation_distance(const Pose<Scalar>& a, const Pose<Scalar>& b) {
  return a.q.angularDistance(b.q);
}

template <typename Scalar>
Scalar translation_distance(const Pose<Scalar>& a, const Pose<Scalar>& b) {
  return (a.t - b.t).norm();
}

}  // namespace sslam
