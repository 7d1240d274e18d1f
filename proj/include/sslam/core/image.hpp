#pragma once

#include <memory>

#include <Eigen/Core>

#include "sslam/core/camera.hpp"
#include "sslam/core/pose.hpp"

namespace sslam {

/// Planar RGB image; each channel is H x W with values in [0, 1].
struct ImageRGB {
  Eigen::ArrayXXd r, g, b;

  ImageRGB() = default;
  ImageRGB(int height, int width) { resize(height, width); }

  void resize(int height, int width) {
    r.setZero(height, width);
    g.setZero(height, width);
    b.setZero(height, width);
  }

  int height() const { return static_cast<int>(r.rows()); }
  int width() const { return static_cast<int>(r.cols()); }

  Eigen::Vector3d at(int y, int x) const { return {r(y, x), g(y, x), b(y, x)}; }

  void set(int y, int x, const Eigen::Vector3d& c) {
    r(y, x) = c.x();
    g(y, x) = c.y();
    b(y, x) = c.z();
  }

  bool same_shape(const ImageRGB& o) const {
    return height() == o.height() && width() == o.width();
  }
};

/// Per-frame linear exposure correction applied to rendered color:
/// corrected = gain * rendered + bias.
struct Exposure {
  double gain = 1.0;
  double bias = 0.0;
};

/// One RGB-D observation. Depth is in meters with 0 marking invalid pixels.
struct Frame {
  ImageRGB color;
  Eigen::ArrayXXd depth;
  Intrinsicsd intrinsics;
  double timestamp = 0.0;
  Posed pose;  // current world-frame estimate, camera-to-world
  Exposure exposure;
  int id = -1;

  int height() const { return color.height(); }
  int width() const { return color.width(); }
};

using FramePtr = std::shared_ptr<Frame>;

}  // namespace sslam
