#include "sslam/slam/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <stdexcept>

#include "sslam/opt/pose_var.hpp"

namespace sslam {

namespace {

inline double sign_of(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct BaLoss {
  double value = 0;
  OutputGrads upstream;
  double g_gain = 0, g_bias = 0;
};

// Depth + color L1 over all pixels with valid ground truth, no opacity mask;
// the color term compares the exposure-corrected rendering to the
// observation.
BaLoss ba_loss(const RenderOutput& rendered, const Frame& frame, double lambda1) {
  const int height = rendered.height(), width = rendered.width();
  BaLoss out;
  out.upstream.setZero(height, width);
  long depth_count = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (frame.depth(y, x) > 0) ++depth_count;
    }
  }
  const double inv_nd = depth_count > 0 ? 1.0 / static_cast<double>(depth_count) : 0.0;
  const double color_w = lambda1 / (3.0 * static_cast<double>(height) * width);
  const double gain = frame.exposure.gain;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (frame.depth(y, x) > 0) {
        const double rd = rendered.depth(y, x) - frame.depth(y, x);
        out.value += std::abs(rd) * inv_nd;
        out.upstream.depth(y, x) = sign_of(rd) * inv_nd;
      }
      const Eigen::Vector3d raw = rendered.color.at(y, x);
      const Eigen::Vector3d rc = gain * raw +
                                 Eigen::Vector3d::Constant(frame.exposure.bias) -
                                 frame.color.at(y, x);
      out.value += color_w * (std::abs(rc.x()) + std::abs(rc.y()) + std::abs(rc.z()));
      const Eigen::Vector3d s(sign_of(rc.x()), sign_of(rc.y()), sign_of(rc.z()));
      out.upstream.color.set(y, x, color_w * gain * s);
      out.g_gain += color_w * s.dot(raw);
      out.g_bias += color_w * s.sum();
    }
  }
  return out;
}

}  // namespace

double new_area_fraction(const RenderOutput& rendered, const Frame& frame,
                         double attach_accum) {
  long valid = 0, fresh = 0;
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      if (!(frame.depth(y, x) > 0)) continue;
      ++valid;
      if (rendered.accum(y, x) < attach_accum) ++fresh;
    }
  }
  return valid > 0 ? static_cast<double>(fresh) / static_cast<double>(valid) : 0.0;
}

double frustum_overlap(const Posed& a, const Posed& b, const Intrinsicsd& intr, double depth) {
  constexpr int kGridX = 8, kGridY = 6;
  const auto directed = [&](const Posed& from, const Posed& to) {
    const Posed to_cam = inverse(to);
    int inside = 0;
    for (int gy = 0; gy < kGridY; ++gy) {
      for (int gx = 0; gx < kGridX; ++gx) {
        const Eigen::Vector2d px((gx + 0.5) * intr.width / kGridX,
                                 (gy + 0.5) * intr.height / kGridY);
        const Eigen::Vector3d world = from.apply(unproject<double>(intr, px, depth));
        const Eigen::Vector3d cam = to_cam.apply(world);
        if (cam.z() <= 0) continue;
        const Eigen::Vector2d proj = project<double>(intr, cam);
        if (proj.x() >= 0 && proj.x() <= intr.width - 1 && proj.y() >= 0 &&
            proj.y() <= intr.height - 1) {
          ++inside;
        }
      }
    }
    return static_cast<double>(inside) / (kGridX * kGridY);
  };
  return 0.5 * (directed(a, b) + directed(b, a));
}

Pipeline::Pipeline(const PipelineConfig& cfg, const TrackConfig& track_cfg,
                   const MapConfig& map_cfg, const RenderConfig& render_cfg,
                   std::uint64_t seed)
    : cfg_(cfg),
      map_cfg_(map_cfg),
      render_cfg_(render_cfg),
      track_cfg_(track_cfg),
      tracker_(track_cfg, render_cfg),
      local_mapper_(map_cfg, render_cfg, seed ^ 0x9e3779b97f4a7c15ULL),
      global_mapper_(map_cfg, render_cfg, seed ^ 0xc2b2ae3d27d4eb4fULL),
      rng_(seed),
      seed_(seed) {}

Posed Pipeline::world_pose(int record_index) const {
  const FrameRecord& rec = state_.records[static_cast<size_t>(record_index)];
  if (rec.submap >= 0) {
    return compose(state_.submaps[static_cast<size_t>(rec.submap)].rkf_pose, rec.rel);
  }
  return compose(live_rkf_pose_, rec.rel);
}

std::vector<Posed> Pipeline::trajectory() const {
  std::vector<Posed> out;
  out.reserve(state_.records.size());
  for (int i = 0; i < static_cast<int>(state_.records.size()); ++i) {
    out.push_back(world_pose(i));
  }
  return out;
}

void Pipeline::bootstrap_local(const FramePtr& frame, int record_index) {
  (void)record_index;
  local_frames_.clear();
  local_frames_.emplace_back(frame, Posed::Identity());
  local_map_.clear();
  local_mapper_.reset();
  const RenderOutput empty = render_from_camera(local_map_, Posed::Identity(),
                                                frame->intrinsics, render_cfg_);
  local_mapper_.attach_surfels(*frame, Posed::Identity(), empty, local_map_);
  optimize_local();
}

void Pipeline::optimize_local() {
  std::vector<MapFrame> frames;
  frames.reserve(local_frames_.size());
  for (auto& [frame, rel] : local_frames_) frames.push_back({frame.get(), rel});
  for (int k = 0; k < map_cfg_.iters_map; ++k) {
    local_mapper_.map_step(local_map_, frames);
  }
}

std::vector<MapFrame> Pipeline::submap_frames(const std::vector<int>& submap_indices) const {
  std::vector<MapFrame> out;
  for (const int s : submap_indices) {
    const Submap& sm = state_.submaps[static_cast<size_t>(s)];
    for (const auto& [frame, rel] : sm.frames) {
      out.push_back({frame.get(), compose(sm.rkf_pose, rel)});
    }
  }
  return out;
}

std::vector<int> Pipeline::covisible(int submap_index) const {
  if (state_.submaps.empty()) return {};
  const Submap& query = state_.submaps[static_cast<size_t>(submap_index)];
  const Intrinsicsd& intr = query.frames.front().first->intrinsics;
  std::vector<int> out{submap_index};
  for (int s = 0; s < static_cast<int>(state_.submaps.size()); ++s) {
    if (s == submap_index) continue;
    if (frustum_overlap(query.rkf_pose, state_.submaps[static_cast<size_t>(s)].rkf_pose, intr,
                        cfg_.covis_depth) > cfg_.covis_overlap_min) {
      out.push_back(s);
    }
  }
  return out;
}

void Pipeline::bundle_adjust(const std::vector<int>& covis) {
  if (covis.empty() || state_.global_map.empty()) return;

  // The first reference keyframe overall is the gauge and stays fixed.
  std::map<int, PoseVar> vars;
  for (const int s : covis) {
    if (s == 0) continue;
    vars.emplace(s, PoseVar(inverse(state_.submaps[static_cast<size_t>(s)].rkf_pose),
                            track_cfg_.adam_beta1, track_cfg_.adam_beta2));
  }

  std::vector<std::pair<int, int>> pool;  // (submap, frame index)
  for (const int s : covis) {
    const Submap& sm = state_.submaps[static_cast<size_t>(s)];
    for (int j = 0; j < static_cast<int>(sm.frames.size()); ++j) pool.emplace_back(s, j);
  }
  if (pool.empty()) return;

  std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
  for (int k = 0; k < cfg_.ba_steps; ++k) {
    const double scale = decayed_lr(1.0, track_cfg_.lr_final_ratio, k, cfg_.ba_steps);
    const auto [s, j] = pool[pick(rng_)];
    const Submap& sm = state_.submaps[static_cast<size_t>(s)];
    Frame& frame = *sm.frames[static_cast<size_t>(j)].first;
    const Posed cam_from_rkf = inverse(sm.frames[static_cast<size_t>(j)].second);

    const auto it = vars.find(s);
    const Posed rkf_from_world =
        it != vars.end() ? it->second.value() : inverse(sm.rkf_pose);
    const Posed w2c = compose(cam_from_rkf, rkf_from_world);

    RenderTrace trace;
    const RenderOutput rendered =
        render_from_camera(state_.global_map, w2c, frame.intrinsics, render_cfg_, &trace);
    const BaLoss loss = ba_loss(rendered, frame, cfg_.ba_lambda1);
    const RenderGradients grads =
        render_backward(state_.global_map, trace, render_cfg_, loss.upstream);
    global_mapper_.apply_surfel_step(state_.global_map, grads);
    global_mapper_.step_exposure(frame, loss.g_gain, loss.g_bias);
    if (it != vars.end()) {
      it->second.apply(chain_left_compose(cam_from_rkf, grads.d_pose),
                       track_cfg_.lr_rot * scale, track_cfg_.lr_trans * scale);
    }
  }

  for (auto& [s, var] : vars) {
    state_.submaps[static_cast<size_t>(s)].rkf_pose = inverse(var.value());
  }
  if (live_rkf_parent_ >= 0) live_rkf_pose_ = world_pose(live_rkf_parent_);
}

void Pipeline::random_optimization(int steps) {
  if (state_.submaps.empty() || state_.global_map.empty()) return;
  std::vector<int> all(state_.submaps.size());
  for (int s = 0; s < static_cast<int>(all.size()); ++s) all[static_cast<size_t>(s)] = s;
  const std::vector<MapFrame> pool = submap_frames(all);
  if (pool.empty()) return;
  for (int k = 0; k < steps; ++k) {
    global_mapper_.map_step(state_.global_map, pool);
  }
}

void Pipeline::final_refinement(int steps) {
  random_optimization(steps);
  if (!state_.global_map.empty()) global_mapper_.prune(state_.global_map);
}

void Pipeline::hand_off_local_map() {
  if (local_frames_.empty()) return;

  Submap sm;
  sm.rkf_pose = live_rkf_pose_;
  sm.frames = local_frames_;
  sm.local_map = local_map_;
  sm.frozen = true;
  const int s_idx = static_cast<int>(state_.submaps.size());
  state_.submaps.push_back(std::move(sm));
  for (const int ri : live_records_) {
    state_.records[static_cast<size_t>(ri)].submap = s_idx;
  }
  live_records_.clear();

  // Integrate: opacity reset, transform to world by the RKF pose, append.
  const Submap& frozen = state_.submaps[static_cast<size_t>(s_idx)];
  std::vector<Surfeld> moved;
  moved.reserve(frozen.local_map.surfels.size());
  for (const Surfeld& s : frozen.local_map.surfels) {
    Surfeld w = transform_surfel(s, frozen.rkf_pose);
    w.opacity = cfg_.merge_opacity_reset;
    moved.push_back(w);
  }
  global_mapper_.append(state_.global_map, moved);

  // Joint mapping over the new submap and its covisible set, then prune the
  // redundant overlap and refine poses.
  const std::vector<int> covis = covisible(s_idx);
  const std::vector<MapFrame> pool = submap_frames(covis);
  for (int k = 0; k < cfg_.merge_map_steps; ++k) {
    global_mapper_.map_step(state_.global_map, pool);
  }
  global_mapper_.prune(state_.global_map);
  bundle_adjust(covis);
  if (cfg_.enable_random_opt) random_optimization(cfg_.random_opt_steps);
}

void Pipeline::handle_lost(const FramePtr& frame, const TrackResult& bad) {
  ++state_.lost_frames;
  Posed world_est = compose(live_rkf_pose_, bad.pose);

  // Track once more against the union of the live map and every covisible
  // frozen map, all in world coordinates.
  SurfelMapd union_map;
  for (const Surfeld& s : local_map_.surfels) {
    union_map.surfels.push_back(transform_surfel(s, live_rkf_pose_));
  }
  for (const Submap& sm : state_.submaps) {
    if (frustum_overlap(world_est, sm.rkf_pose, frame->intrinsics, cfg_.covis_depth) <=
        cfg_.covis_overlap_min) {
      continue;
    }
    for (const Surfeld& s : sm.local_map.surfels) {
      union_map.surfels.push_back(transform_surfel(s, sm.rkf_pose));
    }
  }
  ++union_map.generation;
  if (!union_map.empty()) {
    Tracker retracker(track_cfg_, render_cfg_);
    const TrackResult retry = retracker.track(union_map, *frame, world_est);
    world_est = retry.pose;
  }

  hand_off_local_map();

  const int ri = static_cast<int>(state_.records.size());
  state_.records.push_back({frame, Posed::Identity(), -1, true, true});
  live_records_.push_back(ri);
  live_rkf_pose_ = world_est;
  live_rkf_parent_ = -1;  // absolute: no frozen parent to derive from
  bootstrap_local(frame, ri);
  ++state_.keyframes;
}

void Pipeline::process_frame(const FramePtr& frame) {
  const int ri = static_cast<int>(state_.records.size());
  if (ri == 0) {
    live_rkf_pose_ = Posed::Identity();
    live_rkf_parent_ = -1;
    state_.records.push_back({frame, Posed::Identity(), -1, true, false});
    live_records_.push_back(0);
    bootstrap_local(frame, 0);
    ++state_.keyframes;
    return;
  }

  const Posed prev = world_pose(ri - 1);
  Posed init_world = prev;
  if (ri >= 2) {
    const Posed prev2 = world_pose(ri - 2);
    init_world = init_pose(prev, &prev2);
  }
  const Posed rel_init = compose(inverse(live_rkf_pose_), init_world);

  const auto t0 = std::chrono::steady_clock::now();
  const TrackResult tracked = tracker_.track(local_map_, *frame, rel_init);
  timing_.track_seconds += seconds_since(t0);
  ++timing_.tracked_frames;

  if (tracked.lost) {
    handle_lost(frame, tracked);
    return;
  }

  state_.records.push_back({frame, tracked.pose, -1, false, false});
  live_records_.push_back(ri);
  local_frames_.emplace_back(frame, tracked.pose);

  const RenderOutput rendered = render_from_camera(local_map_, inverse(tracked.pose),
                                                   frame->intrinsics, render_cfg_);
  const double fresh = new_area_fraction(rendered, *frame, map_cfg_.attach_accum);
  const bool is_keyframe = !cfg_.enable_keyframes || fresh > cfg_.tau_k;
  if (is_keyframe) {
    local_mapper_.attach_surfels(*frame, tracked.pose, rendered, local_map_);
    optimize_local();
    state_.records[static_cast<size_t>(ri)].keyframe = true;
    ++state_.keyframes;
  }

  const double budget = cfg_.tau_l * frame->height() * frame->width();
  if (cfg_.enable_local_map && local_map_.size() > budget) {
    hand_off_local_map();
    live_rkf_parent_ = ri;
    live_rkf_pose_ = world_pose(ri);
    bootstrap_local(frame, ri);
  }
}

void Pipeline::finish() {
  hand_off_local_map();
  if (cfg_.enable_final_refine) final_refinement(cfg_.final_refine_steps);
}

}  // namespace sslam
