#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "sslam/core/pose.hpp"

namespace sslam {

inline constexpr double kMinOpacity = 1e-4;
inline constexpr double kMaxOpacity = 0.9999;
inline constexpr double kMinScale = 1e-6;

/// Flat Gaussian primitive on a plane. The orientation quaternion encodes a
/// rotation matrix whose first two columns span the tangent plane and whose
/// third column is the surfel normal; (su, sv) are the tangential extents in
/// meters.
template <typename Scalar>
struct Surfel {
  Eigen::Vector3<Scalar> center = Eigen::Vector3<Scalar>::Zero();
  Eigen::Quaternion<Scalar> orientation = Eigen::Quaternion<Scalar>::Identity();
  Scalar su = Scalar(0.01), sv = Scalar(0.01);
  Scalar opacity = Scalar(0.5);
  Eigen::Vector3<Scalar> color = Eigen::Vector3<Scalar>::Zero();

  Eigen::Matrix3<Scalar> rotation() const {
    return orientation.normalized().toRotationMatrix();
  }

  Eigen::Vector3<Scalar> normal() const { return rotation().col(2); }

  /// Project back into the valid set; called after every optimizer update.
  void clamp() {
    orientation.normalize();
    su = std::max(su, Scalar(kMinScale));
    sv = std::max(sv, Scalar(kMinScale));
    opacity = std::min(std::max(opacity, Scalar(kMinOpacity)), Scalar(kMaxOpacity));
    color = color.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  }
};

using Surfeld = Surfel<double>;

/// Rigid transform of a surfel: the center moves with the pose, the
/// orientation is left-multiplied by the pose rotation, everything else is
/// untouched.
template <typename Scalar>
Surfel<Scalar> transform_surfel(const Surfel<Scalar>& s, const Pose<Scalar>& pose) {
  Surfel<Scalar> out = s;
  out.center = pose.apply(s.center);
  out.orientation = pose.q * s.orientation;
  out.orientation.normalize();
  return out;
}

/// Growable surfel collection. The generation counter bumps on every
/// structural change (insertion or removal) so optimizer state held
/// elsewhere can detect staleness.
template <typename Scalar>
struct SurfelMap {
  std::vector<Surfel<Scalar>> surfels;
  std::uint64_t generation = 0;

  int size() const { return static_cast<int>(surfels.size()); }
  bool empty() const { return surfels.empty(); }

  void add(const Surfel<Scalar>& s) {
    surfels.push_back(s);
    ++generation;
  }

  void clear() {
    surfels.clear();
    ++generation;
  }
};

using SurfelMapd = SurfelMap<double>;

}  // namespace sslam
