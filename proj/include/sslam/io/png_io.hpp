#pragma once

#include <string>

#include <Eigen/Core>

#include "sslam/core/image.hpp"

namespace sslam {

/// Depth maps are stored as 16-bit grayscale PNG with this many meters per
/// unit, the usual RGB-D dataset convention. Zero stays zero (invalid).
inline constexpr double kDepthUnit = 1.0 / 5000.0;

ImageRGB load_color_png(const std::string& path);
void save_color_png(const std::string& path, const ImageRGB& image);

Eigen::ArrayXXd load_depth_png(const std::string& path, double unit = kDepthUnit);
void save_depth_png(const std::string& path, const Eigen::ArrayXXd& depth,
                    double unit = kDepthUnit);

/// 8-bit grayscale of values already in [0, 1]; a cheap visualization sink.
void save_gray_png(const std::string& path, const Eigen::ArrayXXd& values);

}  // namespace sslam
