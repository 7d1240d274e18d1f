// Shared synthetic fixtures: surfel maps constructed exactly on analytic
// geometry, and frames whose ground truth is the map's own rendering so the
// pose optimum sits exactly at the true pose.
#pragma once

#include <random>

#include "sslam/core/image.hpp"
#include "sslam/io/synthetic.hpp"
#include "sslam/render/renderer.hpp"

namespace scenes {

using namespace sslam;

inline Eigen::Quaterniond patch_orientation(const PlanePatch& p) {
  Eigen::Matrix3d rot;
  rot.col(0) = p.axis_u;
  rot.col(1) = p.axis_v;
  rot.col(2) = p.normal();
  return Eigen::Quaterniond(rot).normalized();
}

/// Grid of surfels lying exactly on the patches, textured by the patch
/// colors.
inline SurfelMapd patch_map(const std::vector<PlanePatch>& patches, double spacing,
                            double opacity) {
  SurfelMapd map;
  for (const PlanePatch& p : patches) {
    const Eigen::Quaterniond q = patch_orientation(p);
    for (double v = -p.half_v + spacing / 2; v <= p.half_v; v += spacing) {
      for (double u = -p.half_u + spacing / 2; u <= p.half_u; u += spacing) {
        Surfeld s;
        s.center = p.center + u * p.axis_u + v * p.axis_v;
        s.orientation = q;
        s.su = s.sv = spacing;
        s.opacity = opacity;
        s.color = p.color_at(u, v);
        map.add(s);
      }
    }
  }
  return map;
}

/// Frame whose color/depth ground truth is the map rendered at `camera`.
inline FramePtr frame_from_map(const SurfelMapd& map, const Posed& camera,
                               const Intrinsicsd& intr, const RenderConfig& cfg, int id = 0) {
  auto frame = std::make_shared<Frame>();
  const RenderOutput out = render(map, camera, intr, cfg);
  frame->color = out.color;
  frame->depth = out.depth;
  frame->intrinsics = intr;
  frame->id = id;
  frame->timestamp = id;
  return frame;
}

inline Intrinsicsd intrinsics(int w, int h, double focal_scale = 0.9) {
  Intrinsicsd intr;
  intr.width = w;
  intr.height = h;
  intr.fx = intr.fy = focal_scale * w;
  intr.cx = w / 2.0 - 0.5;
  intr.cy = h / 2.0 - 0.5;
  return intr;
}

/// Camera a touch back from the two-plane scene, both planes in view.
inline Posed two_plane_camera() {
  Posed cam;
  cam.t = {0, 0, -0.2};
  return cam;
}

inline Posed perturbed(const Posed& pose, std::mt19937_64& rng, double max_angle,
                       double max_shift) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Eigen::Vector3d axis =
      Eigen::Vector3d(u(rng), u(rng), u(rng)).normalized();
  std::uniform_real_distribution<double> mag(0.0, 1.0);
  Posed delta;
  delta.q = Eigen::Quaterniond(Eigen::AngleAxisd(max_angle * mag(rng), axis));
  delta.t = max_shift * mag(rng) * Eigen::Vector3d(u(rng), u(rng), u(rng)).normalized();
  return compose(delta, pose);
}

}  // namespace scenes
