#pragma once

#include <stdexcept>

#include <Eigen/Core>

namespace sslam {

/// Pinhole camera. Depth is camera-frame z, not ray length, which matches
/// how depth maps are stored in RGB-D datasets.
template <typename Scalar>
struct Intrinsics {
  Scalar fx = 0, fy = 0;
  Scalar cx = 0, cy = 0;
  int width = 0, height = 0;

  bool valid() const {
    return fx > Scalar(0) && fy > Scalar(0) && cx > Scalar(0) && cx < Scalar(width) &&
           cy > Scalar(0) && cy < Scalar(height) && width > 0 && height > 0;
  }

  Scalar mean_focal() const { return (fx + fy) / Scalar(2); }
};

using Intrinsicsd = Intrinsics<double>;

/// Unit-length viewing ray through a pixel, camera frame, z > 0.
template <typename Scalar>
Eigen::Vector3<Scalar> pixel_ray(const Intrinsics<Scalar>& intr,
                                 const Eigen::Vector2<Scalar>& px) {
  Eigen::Vector3<Scalar> dir((px.x() - intr.cx) / intr.fx, (px.y() - intr.cy) / intr.fy,
                             Scalar(1));
  return dir.normalized();
}

/// Camera-frame point whose projection is px and whose z equals depth.
template <typename Scalar>
Eigen::Vector3<Scalar> unproject(const Intrinsics<Scalar>& intr,
                                 const Eigen::Vector2<Scalar>& px, Scalar depth) {
  if (!(depth > Scalar(0))) {
    throw std::invalid_argument("unproject: depth must be positive");
  }
  return {(px.x() - intr.cx) / intr.fx * depth, (px.y() - intr.cy) / intr.fy * depth, depth};
}

template <typename Scalar>
Eigen::Vector2<Scalar> project(const Intrinsics<Scalar>& intr,
                               const Eigen::Vector3<Scalar>& p) {
  return {intr.fx * p.x() / p.z() + intr.cx, intr.fy * p.y() / p.z() + intr.cy};
}

}  // namespace sslam
