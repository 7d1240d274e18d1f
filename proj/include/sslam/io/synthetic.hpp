#pragma once

#include <cstdint>
#include <vector>

#include "sslam/core/image.hpp"
#include "sslam/io/metrics.hpp"

namespace sslam {

/// Finite textured rectangle in a plane; axis_u and axis_v are orthonormal
/// and span the patch, so the normal is their cross product.
struct PlanePatch {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis_u = Eigen::Vector3d::UnitX();
  Eigen::Vector3d axis_v = Eigen::Vector3d::UnitY();
  double half_u = 1.0, half_v = 1.0;

  enum class Texture { Checker, Gradient };
  Texture texture = Texture::Checker;
  Eigen::Vector3d color_a{0.85, 0.85, 0.85};
  Eigen::Vector3d color_b{0.15, 0.15, 0.15};
  double cell = 0.25;  // checker cell size in meters

  Eigen::Vector3d normal() const { return axis_u.cross(axis_v).normalized(); }
  Eigen::Vector3d color_at(double u, double v) const;
};

/// Scene with closed-form geometry: every emitted depth map is the exact
/// ray/plane solution unless depth noise is requested.
struct SyntheticScene {
  std::vector<PlanePatch> patches;
  Intrinsicsd intrinsics;
  std::vector<TrajectoryPoint> trajectory;  // camera-to-world per timestamp
  double depth_noise = 0.0;                 // stddev in meters; 0 = exact
  std::uint64_t noise_seed = 0;
};

/// Analytic render of the front-most patch per pixel.
void raycast(const SyntheticScene& scene, const Posed& camera, ImageRGB* color,
             Eigen::ArrayXXd* depth);

struct GeneratedSequence {
  std::vector<FramePtr> frames;
  Trajectory groundtruth;
};

GeneratedSequence generate(const SyntheticScene& scene);

/// Convenience builders for the synthetic test scenes.

/// Axis-aligned room of floor plus four walls, checker-textured with a
/// distinct palette per plane. `size` is the inner edge length, `height`
/// the wall height.
std::vector<PlanePatch> room_patches(double size, double height);

/// Two fronto-ish planes at different depths, the near one covering only
/// part of the view; exercises occlusion boundaries.
std::vector<PlanePatch> two_plane_patches(double near_z, double far_z);

/// Circular-arc trajectory at a fixed height, camera looking outward from
/// the circle center. Angles are in radians, timestamps 0..frames-1.
std::vector<TrajectoryPoint> orbit_trajectory(int frames, double radius, double height,
                                              double angle_begin, double angle_end);

/// Straight-line trajectory between two camera poses.
std::vector<TrajectoryPoint> linear_trajectory(int frames, const Posed& begin,
                                               const Posed& end);

}  // namespace sslam
