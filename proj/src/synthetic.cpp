#include "sslam/io/synthetic.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace sslam {

Eigen::Vector3d PlanePatch::color_at(double u, double v) const {
  if (texture == Texture::Gradient) {
    const double t = std::min(std::max((u + half_u) / (2.0 * half_u), 0.0), 1.0);
    return color_a + t * (color_b - color_a);
  }
  const long cu = static_cast<long>(std::floor((u + 1e-9) / cell));
  const long cv = static_cast<long>(std::floor((v + 1e-9) / cell));
  return ((cu + cv) & 1) ? color_b : color_a;
}

void raycast(const SyntheticScene& scene, const Posed& camera, ImageRGB* color,
             Eigen::ArrayXXd* depth) {
  const Intrinsicsd& intr = scene.intrinsics;
  color->resize(intr.height, intr.width);
  depth->setZero(intr.height, intr.width);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const Eigen::Vector3d ray_cam =
          pixel_ray<double>(intr, {static_cast<double>(x), static_cast<double>(y)});
      const Eigen::Vector3d dir = camera.q * ray_cam;
      double best = std::numeric_limits<double>::infinity();
      Eigen::Vector3d best_color = Eigen::Vector3d::Zero();
      for (const PlanePatch& patch : scene.patches) {
        const Eigen::Vector3d n = patch.normal();
        const double denom = dir.dot(n);
        if (std::abs(denom) < 1e-12) continue;
        const double thit = n.dot(patch.center - camera.t) / denom;
        if (thit <= 1e-9) continue;
        const Eigen::Vector3d p = camera.t + thit * dir;
        const double lu = (p - patch.center).dot(patch.axis_u);
        if (std::abs(lu) > patch.half_u) continue;
        const double lv = (p - patch.center).dot(patch.axis_v);
        if (std::abs(lv) > patch.half_v) continue;
        const double d = thit * ray_cam.z();
        if (d < best) {
          best = d;
          best_color = patch.color_at(lu, lv);
        }
      }
      if (std::isfinite(best)) {
        depth->operator()(y, x) = best;
        color->set(y, x, best_color);
      }
    }
  }
}

GeneratedSequence generate(const SyntheticScene& scene) {
  GeneratedSequence out;
  std::mt19937_64 rng(scene.noise_seed);
  std::normal_distribution<double> noise(0.0, scene.depth_noise);
  int id = 0;
  for (const TrajectoryPoint& tp : scene.trajectory) {
    auto frame = std::make_shared<Frame>();
    frame->intrinsics = scene.intrinsics;
    frame->timestamp = tp.timestamp;
    frame->id = id++;
    raycast(scene, tp.pose, &frame->color, &frame->depth);
    if (scene.depth_noise > 0) {
      for (int y = 0; y < frame->depth.rows(); ++y) {
        for (int x = 0; x < frame->depth.cols(); ++x) {
          if (frame->depth(y, x) > 0) {
            frame->depth(y, x) = std::max(frame->depth(y, x) + noise(rng), 1e-4);
          }
        }
      }
    }
    out.frames.push_back(std::move(frame));
    out.groundtruth.push_back(tp);
  }
  return out;
}

std::vector<PlanePatch> room_patches(double size, double height) {
  const double s = size / 2.0, h = height / 2.0;
  std::vector<PlanePatch> patches(5);

  // Floor (y points down, so the floor sits at +h).
  patches[0].center = {0, h, 0};
  patches[0].axis_u = Eigen::Vector3d::UnitX();
  patches[0].axis_v = Eigen::Vector3d::UnitZ();
  patches[0].half_u = s;
  patches[0].half_v = s;
  patches[0].color_a = {0.65, 0.6, 0.55};
  patches[0].color_b = {0.3, 0.28, 0.25};
  patches[0].cell = 0.21;

  struct WallSpec {
    Eigen::Vector3d center, axis_u;
    Eigen::Vector3d color_a, color_b;
    double cell;
  };
  const WallSpec specs[4] = {
      {{s, 0, 0}, {0, 0, 1}, {0.9, 0.35, 0.3}, {0.95, 0.9, 0.85}, 0.24},
      {{-s, 0, 0}, {0, 0, 1}, {0.3, 0.75, 0.35}, {0.9, 0.95, 0.85}, 0.31},
      {{0, 0, s}, {1, 0, 0}, {0.3, 0.4, 0.85}, {0.85, 0.9, 0.95}, 0.27},
      {{0, 0, -s}, {1, 0, 0}, {0.85, 0.8, 0.3}, {0.4, 0.35, 0.3}, 0.35},
  };
  for (int i = 0; i < 4; ++i) {
    PlanePatch& p = patches[static_cast<size_t>(i + 1)];
    p.center = specs[i].center;
    p.axis_u = specs[i].axis_u;
    p.axis_v = Eigen::Vector3d::UnitY();
    p.half_u = s;
    p.half_v = h;
    p.color_a = specs[i].color_a;
    p.color_b = specs[i].color_b;
    p.cell = specs[i].cell;
  }
  return patches;
}

std::vector<PlanePatch> two_plane_patches(double near_z, double far_z) {
  std::vector<PlanePatch> patches(2);
  // Far plane, tilted about x so its depth field constrains every pose
  // degree of freedom.
  const double tilt_far = 0.35;
  patches[0].center = {0, 0, far_z};
  patches[0].axis_u = Eigen::Vector3d::UnitX();
  patches[0].axis_v = Eigen::Vector3d(0, std::cos(tilt_far), std::sin(tilt_far));
  patches[0].half_u = 0.8 * far_z;
  patches[0].half_v = 0.8 * far_z;
  patches[0].color_a = {0.85, 0.55, 0.3};
  patches[0].color_b = {0.25, 0.35, 0.7};
  patches[0].cell = 0.5;

  // Near plane covering the left part of the view, tilted about y, its edge
  // down the middle of the image.
  const double tilt_near = 0.45;
  patches[1].center = {-near_z * 0.7, 0, near_z};
  patches[1].axis_u = Eigen::Vector3d(std::cos(tilt_near), 0, -std::sin(tilt_near));
  patches[1].axis_v = Eigen::Vector3d::UnitY();
  patches[1].half_u = near_z * 0.7;
  patches[1].half_v = 2.0 * near_z;
  patches[1].color_a = {0.9, 0.9, 0.85};
  patches[1].color_b = {0.2, 0.6, 0.55};
  patches[1].cell = 0.35;
  return patches;
}

std::vector<TrajectoryPoint> orbit_trajectory(int frames, double radius, double height,
                                              double angle_begin, double angle_end) {
  std::vector<TrajectoryPoint> out;
  out.reserve(static_cast<size_t>(frames));
  for (int i = 0; i < frames; ++i) {
    const double t = frames > 1 ? static_cast<double>(i) / (frames - 1) : 0.0;
    const double a = angle_begin + t * (angle_end - angle_begin);
    const Eigen::Vector3d forward(std::cos(a), 0, std::sin(a));
    Eigen::Matrix3d rot;
    rot.col(0) = Eigen::Vector3d(std::sin(a), 0, -std::cos(a));
    rot.col(1) = Eigen::Vector3d::UnitY();
    rot.col(2) = forward;
    TrajectoryPoint tp;
    tp.timestamp = static_cast<double>(i);
    tp.pose.q = Eigen::Quaterniond(rot).normalized();
    tp.pose.t = Eigen::Vector3d(radius * std::cos(a), height, radius * std::sin(a));
    out.push_back(tp);
  }
  return out;
}

std::vector<TrajectoryPoint> linear_trajectory(int frames, const Posed& begin,
                                               const Posed& end) {
  std::vector<TrajectoryPoint> out;
  out.reserve(static_cast<size_t>(frames));
  for (int i = 0; i < frames; ++i) {
    const double t = frames > 1 ? static_cast<double>(i) / (frames - 1) : 0.0;
    TrajectoryPoint tp;
    tp.timestamp = static_cast<double>(i);
    tp.pose.q = begin.q.slerp(t, end.q);
    tp.pose.t = (1.0 - t) * begin.t + t * end.t;
    out.push_back(tp);
  }
  return out;
}

}  // namespace sslam
