#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sslam/core/camera.hpp"
#include "sslam/core/image.hpp"
#include "sslam/core/pose.hpp"
#include "sslam/core/surfel.hpp"

namespace sslam {

struct RenderConfig {
  /// Sensitivity of the post-median depth down-weighting; larger values keep
  /// more of a far surfel's own depth.
  double depth_adjust_sensitivity = 4.0;
  /// Minimum blending alpha for an intersection to count.
  double alpha_cutoff = 1.0 / 255.0;
  /// Blending stops once remaining transmittance drops below this.
  double transmittance_stop = 1e-4;
  /// Cumulative-weight level that defines the median surfel along a ray.
  double median_threshold = 0.5;
  /// Minimum |ray · normal| for a ray/plane intersection to be accepted.
  double parallel_eps = 1e-6;

  // Ablation switches. All default to the full model.
  bool enable_unbiased_depth = true;  // off: blend surfel-center depths instead
  bool enable_depth_adjust = true;    // off: every surfel keeps its own depth
  bool enable_depth_norm = true;      // off: depth is the raw weighted sum

  /// Tile-binned candidate gathering. Must agree with the brute-force loop
  /// to the last bit; kept switchable so tests can compare the two paths.
  bool use_tiles = true;
  int tile_size = 16;
};

/// One ray/surfel intersection. (u, v) are plane coordinates of the hit in
/// units of the surfel scales.
struct Intersection {
  int surfel = 0;
  double u = 0, v = 0;
  double d = 0;      // camera-z depth of the hit, meters
  double gauss = 0;  // exp(-(u^2+v^2)/2)
  double alpha = 0;  // opacity * gauss
};

struct RenderOutput {
  ImageRGB color;
  Eigen::ArrayXXd depth;  // meters; 0 where nothing was hit
  Eigen::ArrayXXd accum;  // accumulated opacity in [0, 1]

  int height() const { return color.height(); }
  int width() const { return color.width(); }
};

/// Surfel expressed in the camera frame, with the derived quantities the
/// per-pixel loop needs.
struct CamSurfel {
  Eigen::Vector3d center;
  Eigen::Matrix3d rot;  // columns: e_u, e_v, normal
  double su = 0, sv = 0;
  double opacity = 0;
  Eigen::Vector3d color;
  /// Squared local radius beyond which alpha falls below the cutoff;
  /// negative when the surfel can never contribute.
  double q_max = -1;
};

/// One blended intersection kept for the backward pass.
struct BlendedHit {
  int surfel = 0;
  double d = 0, u = 0, v = 0;
  double gauss = 0, alpha = 0;
  double w = 0;      // blending weight
  double d_adj = 0;  // surface-aware adjusted depth
  double beta = 0;   // adjustment factor, 1 at and before the median
};

struct PixelTrace {
  int median = -1;  // index into hits; -1 when the pixel is empty
  std::vector<BlendedHit> hits;
};

/// Everything the backward pass needs from a forward render.
struct RenderTrace {
  std::vector<PixelTrace> pixels;  // row-major, height * width
  std::vector<CamSurfel> cam;      // camera-frame snapshot of the map
  Posed world_to_cam;
  Intrinsicsd intr;

  const PixelTrace& at(int y, int x) const {
    return pixels[static_cast<size_t>(y) * intr.width + x];
  }
};

/// Gradients of a scalar loss w.r.t. the map and the world-to-camera
/// transform. Quaternion rows are w.r.t. raw (x, y, z, w) coefficients and
/// tangent to the unit sphere.
struct RenderGradients {
  Eigen::Matrix<double, Eigen::Dynamic, 3> d_center;
  Eigen::Matrix<double, Eigen::Dynamic, 4> d_orientation;
  Eigen::Matrix<double, Eigen::Dynamic, 2> d_scale;
  Eigen::VectorXd d_opacity;
  Eigen::Matrix<double, Eigen::Dynamic, 3> d_color;
  /// (qx, qy, qz, qw, tx, ty, tz) of the world-to-camera transform.
  Eigen::Matrix<double, 7, 1> d_pose;

  void setZero(int n) {
    d_center.setZero(n, 3);
    d_orientation.setZero(n, 4);
    d_scale.setZero(n, 2);
    d_opacity.setZero(n);
    d_color.setZero(n, 3);
    d_pose.setZero();
  }
};

/// Upstream loss gradients w.r.t. the rendered maps.
struct OutputGrads {
  ImageRGB color;
  Eigen::ArrayXXd depth;
  Eigen::ArrayXXd accum;

  void setZero(int height, int width) {
    color.resize(height, width);
    depth.setZero(height, width);
    accum.setZero(height, width);
  }
};

/// Extra upstream gradients attached directly to blending internals, aligned
/// with a RenderTrace pixel. Used by losses that read weights and adjusted
/// depths (depth-concentration regularization).
struct PixelHitGrads {
  std::vector<double> d_w;
  std::vector<double> d_dadj;
  double d_median_depth = 0;
};

/// Ray/plane intersection against one camera-frame surfel. Misses are a
/// value: parallel rays, hits behind the camera, and alpha below the cutoff
/// all return nullopt.
std::optional<Intersection> intersect(const Surfeld& cam_surfel, const Eigen::Vector3d& ray,
                                      const RenderConfig& cfg, int index = 0);

struct PixelResult {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  double depth = 0;
  double accum = 0;
};

/// Front-to-back composition of pre-sorted intersections (ascending depth,
/// ties by surfel index). colors[i.surfel] supplies the blended color.
PixelResult render_pixel(std::span<const Intersection> sorted,
                         std::span<const Eigen::Vector3d> colors, const RenderConfig& cfg);

/// Smallest index whose cumulative weight exceeds the median threshold;
/// falls back to the first largest weight when the total never crosses it.
/// Empty input has no median.
std::optional<int> median_index(std::span<const double> weights, const RenderConfig& cfg);

/// Surface-aware adjusted depths: hits up to the median keep their own
/// depth, later hits are pulled toward the median depth the further they
/// stray from it relative to the running depth variance.
std::vector<double> depth_adjust(std::span<const double> depths,
                                 std::span<const double> weights, int median,
                                 const RenderConfig& cfg, std::vector<double>* betas = nullptr);

/// Renders color, depth, and accumulated opacity from a camera pose
/// (camera-to-world). Pass a trace to retain what the backward pass needs.
RenderOutput render(const SurfelMapd& map, const Posed& camera_pose, const Intrinsicsd& intr,
                    const RenderConfig& cfg, RenderTrace* trace = nullptr);

/// Same, parameterized by the world-to-camera transform the optimizers work
/// in.
RenderOutput render_from_camera(const SurfelMapd& map, const Posed& world_to_cam,
                                const Intrinsicsd& intr, const RenderConfig& cfg,
                                RenderTrace* trace = nullptr);

/// Exact reverse-mode gradients of the forward pass recorded in `trace`.
/// `hit_grads`, when given, must be aligned with the trace pixels.
RenderGradients render_backward(const SurfelMapd& map, const RenderTrace& trace,
                                const RenderConfig& cfg, const OutputGrads& upstream,
                                const std::vector<PixelHitGrads>* hit_grads = nullptr);

/// Debug dump of the blended per-pixel intersection lists:
/// pixel_x,pixel_y,surfel,d,alpha,w per line.
void dump_intersections_csv(const RenderTrace& trace, std::ostream& os);

}  // namespace sslam
