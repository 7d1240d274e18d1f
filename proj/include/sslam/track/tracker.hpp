#pragma once

#include <deque>

#include "sslam/core/image.hpp"
#include "sslam/core/pose.hpp"
#include "sslam/core/surfel.hpp"
#include "sslam/render/renderer.hpp"

namespace sslam {

struct TrackConfig {
  int iters = 40;
  double lr_rot = 4e-4;
  double lr_trans = 2e-3;
  /// The per-group learning rates decay exponentially to this fraction of
  /// their initial value over the iteration budget.
  double lr_final_ratio = 0.1;
  double adam_beta1 = 0.7;
  double adam_beta2 = 0.99;
  double lambda1 = 0.5;     // color-term weight
  double accum_mask = 0.9;  // pixels below this accumulated opacity are ignored
  double lost_ratio = 5.0;  // loss-vs-recent-median multiplier flagging a lost frame
  double lost_min_mask = 0.05;  // frames with almost no covered pixels are lost
  int lost_window = 20;         // recent-loss window for the running median
};

struct TrackResult {
  Posed pose;  // camera pose relative to the map origin (camera-to-map)
  double final_loss = 0;
  double masked_fraction = 0;
  bool lost = false;
};

/// Constant-velocity extrapolation from the previous two poses; with a
/// single history entry the previous pose is reused.
Posed init_pose(const Posed& prev, const Posed* prev2);

struct TrackingLoss {
  double value = 0;
  double masked_fraction = 0;
  OutputGrads grads;
};

/// Masked L1 alignment cost: mean over pixels that are both well covered
/// (accumulated opacity above the gate) and carry valid ground-truth depth
/// of |depth residual| + lambda1 * |color residual|. Returns zero with an
/// empty mask.
TrackingLoss tracking_loss(const RenderOutput& rendered, const Frame& frame,
                           const TrackConfig& cfg);

/// Frame-to-model pose estimation. Keeps a window of recent per-frame final
/// losses for the lost-frame detector.
class Tracker {
 public:
  Tracker(const TrackConfig& cfg, const RenderConfig& render_cfg)
      : cfg_(cfg), render_cfg_(render_cfg) {}

  /// Optimizes the camera pose against the map starting from `init`
  /// (camera-to-map). Returns the best pose visited.
  TrackResult track(const SurfelMapd& map, const Frame& frame, const Posed& init);

  const TrackConfig& config() const { return cfg_; }
  void reset_history() { recent_losses_.clear(); }

 private:
  TrackConfig cfg_;
  RenderConfig render_cfg_;
  std::deque<double> recent_losses_;
};

}  // namespace sslam
