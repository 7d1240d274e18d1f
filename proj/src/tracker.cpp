#include "sslam/track/tracker.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <vector>

#include "sslam/opt/pose_var.hpp"

namespace sslam {

namespace {

inline double sign_of(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

double window_median(const std::deque<double>& values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  return n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

}  // namespace

Posed init_pose(const Posed& prev, const Posed* prev2) {
  if (!prev2) return prev;
  return compose(compose(prev, inverse(*prev2)), prev);
}

TrackingLoss tracking_loss(const RenderOutput& rendered, const Frame& frame,
                           const TrackConfig& cfg) {
  const int height = rendered.height(), width = rendered.width();
  if (height != frame.height() || width != frame.width()) {
    throw std::invalid_argument("tracking_loss: resolution mismatch");
  }
  TrackingLoss out;
  out.grads.setZero(height, width);

  long covered = 0, masked = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (rendered.accum(y, x) > cfg.accum_mask) ++covered;
      if (rendered.accum(y, x) > cfg.accum_mask && frame.depth(y, x) > 0) ++masked;
    }
  }
  out.masked_fraction = static_cast<double>(covered) / (static_cast<double>(height) * width);
  if (masked == 0) return out;

  const double inv_n = 1.0 / static_cast<double>(masked);
  const double color_w = cfg.lambda1 * inv_n / 3.0;
  double loss = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!(rendered.accum(y, x) > cfg.accum_mask && frame.depth(y, x) > 0)) continue;
      const double rd = rendered.depth(y, x) - frame.depth(y, x);
      loss += std::abs(rd) * inv_n;
      out.grads.depth(y, x) = sign_of(rd) * inv_n;
      const Eigen::Vector3d rc = rendered.color.at(y, x) - frame.color.at(y, x);
      loss += color_w * (std::abs(rc.x()) + std::abs(rc.y()) + std::abs(rc.z()));
      out.grads.color.set(y, x, color_w * Eigen::Vector3d(sign_of(rc.x()), sign_of(rc.y()),
                                                          sign_of(rc.z())));
    }
  }
  out.value = loss;
  return out;
}

TrackResult Tracker::track(const SurfelMapd& map, const Frame& frame, const Posed& init) {
  if (map.empty()) throw std::invalid_argument("track: map is empty");

  PoseVar var(inverse(init), cfg_.adam_beta1, cfg_.adam_beta2);
  Posed best_w2c = var.value();
  double best_loss = std::numeric_limits<double>::infinity();
  double best_mask = 0;

  for (int k = 0; k < cfg_.iters; ++k) {
    const double scale = decayed_lr(1.0, cfg_.lr_final_ratio, k, cfg_.iters);
    const Posed w2c = var.value();
    RenderTrace trace;
    const RenderOutput rendered =
        render_from_camera(map, w2c, frame.intrinsics, render_cfg_, &trace);
    const TrackingLoss loss = tracking_loss(rendered, frame, cfg_);
    if (loss.value < best_loss) {
      best_loss = loss.value;
      best_w2c = w2c;
      best_mask = loss.masked_fraction;
    }
    const RenderGradients grads = render_backward(map, trace, render_cfg_, loss.grads);
    var.apply(grads.d_pose, cfg_.lr_rot * scale, cfg_.lr_trans * scale);
  }

  TrackResult res;
  res.pose = inverse(best_w2c);
  res.final_loss = best_loss;
  res.masked_fraction = best_mask;
  res.lost = best_mask < cfg_.lost_min_mask;
  if (!res.lost && recent_losses_.size() >= 5) {
    res.lost = res.final_loss > cfg_.lost_ratio * window_median(recent_losses_);
  }
  if (!res.lost) {
    recent_losses_.push_back(res.final_loss);
    while (static_cast<int>(recent_losses_.size()) > cfg_.lost_window) {
      recent_losses_.pop_front();
    }
  }
  return res;
}

}  // namespace sslam
