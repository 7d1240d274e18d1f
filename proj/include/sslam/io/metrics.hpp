#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "sslam/core/image.hpp"
#include "sslam/core/pose.hpp"

namespace sslam {

struct TrajectoryPoint {
  double timestamp = 0;
  Posed pose;  // camera-to-world
};

using Trajectory = std::vector<TrajectoryPoint>;

using MaskXX = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// RMS translational error after rigid (no-scale) alignment of the estimate
/// onto the ground truth. Poses are paired by nearest timestamp within
/// `max_dt`; fewer than two pairs is an error.
double ate_rmse(const Trajectory& estimate, const Trajectory& truth, double max_dt = 0.02);

/// Peak signal-to-noise ratio over the RGB channel mean, capped at 99 dB for
/// (near-)identical images.
double psnr(const ImageRGB& a, const ImageRGB& b);

/// Mean absolute depth difference over pixels valid in the mask; an empty
/// mask yields NaN with a warning on stderr.
double depth_l1(const Eigen::ArrayXXd& rendered, const Eigen::ArrayXXd& truth,
                const MaskXX& valid);

/// One "timestamp tx ty tz qx qy qz qw" line per pose, 9 significant digits.
void save_trajectory(const std::string& path, const Trajectory& traj);
Trajectory load_trajectory(const std::string& path);

}  // namespace sslam
