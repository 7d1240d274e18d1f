#pragma once

#include <memory>
#include <random>
#include <vector>

#include "sslam/core/image.hpp"
#include "sslam/core/pose.hpp"
#include "sslam/core/surfel.hpp"
#include "sslam/map/mapper.hpp"
#include "sslam/track/tracker.hpp"

namespace sslam {

struct PipelineConfig {
  double tau_k = 0.01;  // keyframe threshold on the newly observed fraction
  double tau_l = 1.5;   // local-map surfel budget as a multiple of H*W
  double merge_opacity_reset = 0.01;
  double ba_lambda1 = 0.5;
  double covis_overlap_min = 0.3;
  double covis_depth = 3.0;  // sampling depth for the frustum-overlap test
  int merge_map_steps = 60;  // joint mapping steps after a merge
  int ba_steps = 30;
  int random_opt_steps = 30;  // refinement steps run after every merge
  int final_refine_steps = 300;
  // Ablation switches; all on for the full system.
  bool enable_keyframes = true;
  bool enable_local_map = true;
  bool enable_random_opt = true;
  bool enable_final_refine = true;
};

/// A retired local map: its reference keyframe pose, the member frames with
/// poses relative to the RKF, and the frozen surfel map handed to the
/// back-end.
struct Submap {
  Posed rkf_pose;  // world pose of the reference keyframe
  std::vector<std::pair<FramePtr, Posed>> frames;
  SurfelMapd local_map;
  bool frozen = false;
};

struct FrameRecord {
  FramePtr frame;
  Posed rel;        // camera pose relative to the owning reference keyframe
  int submap = -1;  // -1 while the frame's local map is still live
  bool keyframe = false;
  bool lost = false;
};

struct GlobalState {
  SurfelMapd global_map;
  std::vector<Submap> submaps;
  std::vector<FrameRecord> records;
  int keyframes = 0;
  int lost_frames = 0;
};

struct PipelineTiming {
  double track_seconds = 0;
  int tracked_frames = 0;
};

/// Fraction of valid-depth pixels the mapper would attach at, i.e. whose
/// accumulated opacity falls below the attach threshold.
double new_area_fraction(const RenderOutput& rendered, const Frame& frame,
                         double attach_accum);

/// Symmetric frustum overlap of two camera poses: points sampled on each
/// image plane at `depth` are checked for visibility from the other camera.
double frustum_overlap(const Posed& a, const Posed& b, const Intrinsicsd& intr, double depth);

/// Front-end (local-map tracking and mapping with keyframe selection and
/// rollover) plus back-end (submap database, merges, covisibility-scoped
/// joint optimization, random refinement). Runs synchronously: merges happen
/// inline at rollover.
class Pipeline {
 public:
  Pipeline(const PipelineConfig& cfg, const TrackConfig& track_cfg, const MapConfig& map_cfg,
           const RenderConfig& render_cfg, std::uint64_t seed);

  void process_frame(const FramePtr& frame);

  /// Flushes the live local map into the back-end and runs final
  /// refinement.
  void finish();

  Posed world_pose(int record_index) const;
  std::vector<Posed> trajectory() const;

  const GlobalState& state() const { return state_; }
  GlobalState& state() { return state_; }
  const SurfelMapd& global_map() const { return state_.global_map; }
  const SurfelMapd& local_map() const { return local_map_; }
  const PipelineTiming& timing() const { return timing_; }

  /// Submaps whose reference keyframes share enough frustum overlap with
  /// the query's; always contains the query itself.
  std::vector<int> covisible(int submap_index) const;

  /// Joint optimization of the covisible reference-keyframe poses and the
  /// global map. The very first reference keyframe is the gauge and never
  /// moves.
  void bundle_adjust(const std::vector<int>& covis);

  /// Map-only refinement against frames sampled uniformly from the whole
  /// submap database. Never touches poses.
  void random_optimization(int steps);

  /// Post-sequence refinement: continued random optimization followed by a
  /// prune of floating low-opacity surfels.
  void final_refinement(int steps);

 private:
  void bootstrap_local(const FramePtr& frame, int record_index);
  void optimize_local();
  void hand_off_local_map();
  void handle_lost(const FramePtr& frame, const TrackResult& bad);
  std::vector<MapFrame> submap_frames(const std::vector<int>& submap_indices) const;

  PipelineConfig cfg_;
  MapConfig map_cfg_;
  RenderConfig render_cfg_;
  TrackConfig track_cfg_;

  Tracker tracker_;
  Mapper local_mapper_;
  Mapper global_mapper_;
  std::mt19937_64 rng_;
  std::uint64_t seed_;

  // Live local map, expressed in the frame of its reference keyframe.
  SurfelMapd local_map_;
  Posed live_rkf_pose_;
  int live_rkf_parent_ = -1;  // record index the live RKF pose derives from
  std::vector<std::pair<FramePtr, Posed>> local_frames_;
  std::vector<int> live_records_;

  GlobalState state_;
  PipelineTiming timing_;
};

}  // namespace sslam
