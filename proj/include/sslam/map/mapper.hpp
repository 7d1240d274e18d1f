#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <unordered_map>

#include "sslam/core/image.hpp"
#include "sslam/core/surfel.hpp"
#include "sslam/opt/adam.hpp"
#include "sslam/render/renderer.hpp"

namespace sslam {

struct MapConfig {
  int iters_map = 40;
  double attach_accum = 0.6;  // attach surfels where accumulated opacity is below this
  double edge_low = 0.4;      // edge growth band for pixels without depth
  double edge_high = 0.6;
  double lambda1 = 0.5;  // color-term weight
  double lambda2 = 0.1;  // depth-concentration regularizer weight
  double prune_opacity = 0.05;
  double init_opacity = 0.5;
  // Per-attribute learning rates; scale steps act in log-space.
  double lr_center = 3e-4;
  double lr_orientation = 1e-3;
  double lr_scale = 2e-3;
  double lr_opacity = 2e-2;
  double lr_color = 5e-3;
  double lr_exposure = 5e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  /// Neighbor depth jumps above this fraction of the center depth mark a
  /// discontinuity and suppress the estimated normal.
  double normal_max_rel_gap = 0.05;
};

/// Camera-facing unit normal from central differences of the unprojected
/// depth map. Returns nullopt at image borders, next to invalid depth, and
/// across depth discontinuities; callers fall back to a view-aligned normal.
std::optional<Eigen::Vector3d> normal_from_depth(const Eigen::ArrayXXd& depth,
                                                 const Intrinsicsd& intr, int x, int y,
                                                 double max_rel_gap);

/// Depth-concentration cost: weighted squared deviation of the adjusted
/// depths from the median depth, averaged over rays that have a median.
/// Gradients are written scaled by `grad_scale`.
struct RegLoss {
  double value = 0;
  std::vector<PixelHitGrads> hit_grads;
};
RegLoss reg_loss(const RenderTrace& trace, double grad_scale = 1.0);

/// A frame paired with its camera pose in the frame of the map being
/// optimized.
struct MapFrame {
  Frame* frame = nullptr;
  Posed pose;  // camera-to-map
};

struct MapStepResult {
  double loss = 0;
  int sampled_frame = -1;
};

/// Incremental map construction and refinement. Owns the per-surfel and
/// per-frame-exposure optimizer state, which stays row-aligned with the map
/// as long as all structural changes go through attach/append/prune.
class Mapper {
 public:
  Mapper(const MapConfig& cfg, const RenderConfig& render_cfg, std::uint64_t seed);

  /// Creates surfels for under-covered pixels (valid depth, low accumulated
  /// opacity) and grows the map into depth holes where coverage is partial.
  /// `rendered` must come from (map, pose). Returns the number added.
  int attach_surfels(const Frame& frame, const Posed& pose, const RenderOutput& rendered,
                     SurfelMapd& map);

  /// Appends externally built surfels (map merging) with fresh optimizer
  /// state.
  void append(SurfelMapd& map, std::span<const Surfeld> extra);

  /// One optimization step: renders a uniformly sampled frame, applies the
  /// L1 photometric + depth + concentration cost, and updates all surfel
  /// attributes plus the sampled frame's exposure.
  MapStepResult map_step(SurfelMapd& map, std::span<const MapFrame> frames);

  /// Removes surfels whose opacity fell below the pruning threshold.
  int prune(SurfelMapd& map);

  /// Applies one Adam step on the surfels from externally computed
  /// gradients (used by the pose/map joint optimization, which has its own
  /// cost).
  void apply_surfel_step(SurfelMapd& map, const RenderGradients& grads);

  void step_exposure(Frame& frame, double g_gain, double g_bias);

  void reset();

  const MapConfig& config() const { return cfg_; }
  const RenderConfig& render_config() const { return render_cfg_; }

 private:
  void sync(const SurfelMapd& map);
  void mark(const SurfelMapd& map);

  MapConfig cfg_;
  RenderConfig render_cfg_;
  std::mt19937_64 rng_;

  Adam adam_center_, adam_orient_, adam_scale_, adam_opacity_, adam_color_;
  std::unordered_map<int, Adam> exposure_adam_;  // frame id -> state over (gain, bias)
  std::uint64_t bound_generation_ = 0;
  int bound_size_ = -1;  // -1 marks an unbound mapper
};

}  // namespace sslam
