#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sslam/config.hpp"
#include "sslam/io/dataset.hpp"
#include "sslam/io/map_io.hpp"
#include "sslam/io/metrics.hpp"
#include "sslam/io/png_io.hpp"
#include "sslam/io/synthetic.hpp"
#include "sslam/render/renderer.hpp"
#include "sslam/slam/pipeline.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct RunOptions {
  std::string dataset;
  std::string format = "synthetic";
  std::string config_path;
  std::string out_dir;
  std::string map_path;
  std::uint64_t seed = 0;
  std::string mode = "full";
  std::vector<std::string> ablations;
  bool save_map = false;
  bool save_renders = false;
};

void apply_ablation(sslam::AllConfig& cfg, const std::string& raw) {
  std::string name = raw;
  if (name.rfind("disable_", 0) == 0) name = name.substr(8);
  if (name == "depth_adjust") {
    cfg.render.enable_depth_adjust = false;
  } else if (name == "depth_norm") {
    cfg.render.enable_depth_norm = false;
  } else if (name == "unbiased_depth") {
    cfg.render.enable_unbiased_depth = false;
  } else if (name == "keyframes") {
    cfg.pipeline.enable_keyframes = false;
  } else if (name == "local_map") {
    cfg.pipeline.enable_local_map = false;
  } else if (name == "random_opt") {
    cfg.pipeline.enable_random_opt = false;
  } else if (name == "final_refine") {
    cfg.pipeline.enable_final_refine = false;
  } else {
    throw CLI::ValidationError("--ablate", "unknown ablation '" + raw + "'");
  }
}

sslam::LoadedSequence load_dataset(const RunOptions& opt) {
  if (opt.format == "tum") return sslam::load_tum(opt.dataset);
  if (opt.format == "synthetic") return sslam::load_synthetic_dir(opt.dataset);
  throw CLI::ValidationError("--format", "unknown format '" + opt.format + "'");
}

struct RenderQuality {
  double psnr_db = 0;
  double depth_l1_m = 0;
  long frames = 0;
};

RenderQuality rendered_quality(const sslam::SurfelMapd& map,
                               const std::vector<sslam::FramePtr>& frames,
                               const std::vector<sslam::Posed>& poses,
                               const sslam::RenderConfig& rcfg, const std::string& dump_dir) {
  RenderQuality q;
  double psnr_sum = 0, l1_sum = 0;
  long l1_frames = 0;
  for (size_t i = 0; i < frames.size(); ++i) {
    const sslam::Frame& frame = *frames[i];
    const sslam::RenderOutput out = sslam::render(map, poses[i], frame.intrinsics, rcfg);
    sslam::ImageRGB corrected = out.color;
    corrected.r = corrected.r * frame.exposure.gain + frame.exposure.bias;
    corrected.g = corrected.g * frame.exposure.gain + frame.exposure.bias;
    corrected.b = corrected.b * frame.exposure.gain + frame.exposure.bias;
    psnr_sum += sslam::psnr(corrected, frame.color);
    const sslam::MaskXX valid = frame.depth > 0 && out.depth > 0;
    if (valid.count() > 0) {
      l1_sum += sslam::depth_l1(out.depth, frame.depth, valid);
      ++l1_frames;
    }
    if (!dump_dir.empty()) {
      char name[64];
      std::snprintf(name, sizeof(name), "/render_%06zu.png", i);
      sslam::save_color_png(dump_dir + name, corrected);
    }
  }
  q.frames = static_cast<long>(frames.size());
  q.psnr_db = frames.empty() ? 0 : psnr_sum / static_cast<double>(frames.size());
  q.depth_l1_m = l1_frames ? l1_sum / static_cast<double>(l1_frames) : 0;
  return q;
}

int run_command(const RunOptions& opt) {
  sslam::AllConfig cfg;
  if (!opt.config_path.empty()) sslam::load_config_file(opt.config_path, cfg);
  for (const std::string& name : opt.ablations) apply_ablation(cfg, name);

  if (opt.mode == "track-only") {
    cfg.pipeline.merge_map_steps = 0;
    cfg.pipeline.ba_steps = 0;
    cfg.pipeline.enable_random_opt = false;
    cfg.pipeline.enable_final_refine = false;
  }

  const sslam::LoadedSequence data = load_dataset(opt);
  fs::create_directories(opt.out_dir);

  json metrics;
  metrics["seed"] = opt.seed;
  metrics["mode"] = opt.mode;
  metrics["ablations"] = opt.ablations;
  metrics["frames"] = data.frames.size();
  metrics["skipped_frames"] = data.skipped;
  json cfg_json;
  for (const auto& [key, value] : sslam::config_dump(cfg)) cfg_json[key] = value;
  metrics["config"] = cfg_json;

  if (opt.mode == "render-only") {
    if (opt.map_path.empty()) {
      throw CLI::ValidationError("--map", "render-only mode needs a map file");
    }
    const sslam::SurfelMapd map = sslam::load_map(opt.map_path);
    std::vector<sslam::Posed> poses;
    sslam::Trajectory sorted_gt = data.groundtruth;
    for (const sslam::FramePtr& f : data.frames) {
      const auto nearest = std::min_element(
          sorted_gt.begin(), sorted_gt.end(),
          [&](const sslam::TrajectoryPoint& a, const sslam::TrajectoryPoint& b) {
            return std::abs(a.timestamp - f->timestamp) < std::abs(b.timestamp - f->timestamp);
          });
      poses.push_back(nearest->pose);
    }
    std::string dump;
    if (opt.save_renders) {
      dump = opt.out_dir + "/renders";
      fs::create_directories(dump);
    }
    const RenderQuality q = rendered_quality(map, data.frames, poses, cfg.render, dump);
    metrics["psnr_db"] = q.psnr_db;
    metrics["depth_l1_m"] = q.depth_l1_m;
    metrics["ate_rmse_m"] = nullptr;
    metrics["keyframes"] = 0;
    metrics["submaps"] = 0;
    metrics["surfels_final"] = map.size();
    std::ofstream(opt.out_dir + "/metrics.json") << metrics.dump(2) << "\n";
    return 0;
  }

  sslam::Pipeline pipeline(cfg.pipeline, cfg.track, cfg.map, cfg.render, opt.seed);
  for (const sslam::FramePtr& frame : data.frames) pipeline.process_frame(frame);
  pipeline.finish();

  const std::vector<sslam::Posed> poses = pipeline.trajectory();
  sslam::Trajectory estimate;
  for (size_t i = 0; i < poses.size(); ++i) {
    estimate.push_back({data.frames[i]->timestamp, poses[i]});
  }
  sslam::save_trajectory(opt.out_dir + "/trajectory.txt", estimate);

  if (data.groundtruth.size() >= 2 && estimate.size() >= 2) {
    metrics["ate_rmse_m"] = sslam::ate_rmse(estimate, data.groundtruth);
  } else {
    metrics["ate_rmse_m"] = nullptr;
  }

  if (opt.mode == "full") {
    std::string dump;
    if (opt.save_renders) {
      dump = opt.out_dir + "/renders";
      fs::create_directories(dump);
    }
    const RenderQuality q =
        rendered_quality(pipeline.global_map(), data.frames, poses, cfg.render, dump);
    metrics["psnr_db"] = q.psnr_db;
    metrics["depth_l1_m"] = q.depth_l1_m;
  } else {
    metrics["psnr_db"] = nullptr;
    metrics["depth_l1_m"] = nullptr;
  }

  metrics["keyframes"] = pipeline.state().keyframes;
  metrics["submaps"] = pipeline.state().submaps.size();
  metrics["surfels_final"] = pipeline.global_map().size();
  metrics["lost_frames"] = pipeline.state().lost_frames;
  metrics["track_seconds_per_frame"] =
      pipeline.timing().tracked_frames
          ? pipeline.timing().track_seconds / pipeline.timing().tracked_frames
          : 0.0;

  if (opt.save_map) sslam::save_map(opt.out_dir + "/map.bin", pipeline.global_map());
  std::ofstream(opt.out_dir + "/metrics.json") << metrics.dump(2) << "\n";
  return 0;
}

int render_views_command(const std::string& map_path, const std::string& poses_path,
                         const std::string& intr_path, const std::string& out_dir) {
  const sslam::SurfelMapd map = sslam::load_map(map_path);
  const sslam::Trajectory poses = sslam::load_trajectory(poses_path);
  const sslam::Intrinsicsd intr = sslam::load_intrinsics(intr_path);
  fs::create_directories(out_dir);
  const sslam::RenderConfig rcfg;
  char name[64];
  for (size_t i = 0; i < poses.size(); ++i) {
    const sslam::RenderOutput out = sslam::render(map, poses[i].pose, intr, rcfg);
    std::snprintf(name, sizeof(name), "/color_%06zu.png", i);
    sslam::save_color_png(out_dir + name, out.color);
    const double max_depth = out.depth.maxCoeff();
    std::snprintf(name, sizeof(name), "/depth_%06zu.png", i);
    sslam::save_gray_png(out_dir + name,
                         max_depth > 0 ? (out.depth / max_depth).eval() : out.depth);
  }
  return 0;
}

int make_synthetic_command(const std::string& out_dir, int frames, int width, int height) {
  sslam::SyntheticScene scene;
  scene.patches = sslam::room_patches(4.0, 2.4);
  scene.intrinsics.width = width;
  scene.intrinsics.height = height;
  scene.intrinsics.fx = 0.9 * width;
  scene.intrinsics.fy = 0.9 * width;
  scene.intrinsics.cx = width / 2.0 - 0.5;
  scene.intrinsics.cy = height / 2.0 - 0.5;
  scene.trajectory = sslam::orbit_trajectory(frames, 0.4, 0.2, 0.0, 4.7);
  const sslam::GeneratedSequence seq = sslam::generate(scene);
  sslam::save_synthetic_dir(out_dir, seq.frames, seq.groundtruth);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense RGB-D SLAM with 2D Gaussian surfels"};
  app.require_subcommand(1);

  RunOptions opt;
  CLI::App* run = app.add_subcommand("run", "Track and map an RGB-D sequence");
  run->add_option("--dataset", opt.dataset, "Sequence directory")->required();
  run->add_option("--format", opt.format, "Dataset format: tum | synthetic");
  run->add_option("--config", opt.config_path, "Flat key = value config file");
  run->add_option("--out", opt.out_dir, "Output directory")->required();
  run->add_option("--seed", opt.seed, "RNG seed");
  run->add_option("--mode", opt.mode, "full | track-only | render-only")
      ->check(CLI::IsMember({"full", "track-only", "render-only"}));
  run->add_option("--ablate", opt.ablations, "Disable a component (repeatable)");
  run->add_option("--map", opt.map_path, "Surfel map file (render-only mode)");
  run->add_flag("--save-map", opt.save_map, "Write the final surfel map");
  run->add_flag("--save-renders", opt.save_renders, "Write per-frame rendered PNGs");

  std::string rv_map, rv_poses, rv_intr, rv_out;
  CLI::App* rv = app.add_subcommand("render-views", "Render a saved map from given poses");
  rv->add_option("--map", rv_map, "Surfel map file")->required();
  rv->add_option("--poses", rv_poses, "Trajectory-format pose file")->required();
  rv->add_option("--intrinsics", rv_intr, "Intrinsics file")->required();
  rv->add_option("--out", rv_out, "Output directory")->required();

  std::string ms_out;
  int ms_frames = 60, ms_width = 80, ms_height = 60;
  CLI::App* ms = app.add_subcommand("make-synthetic", "Emit a small synthetic demo sequence");
  ms->add_option("--out", ms_out, "Output directory")->required();
  ms->add_option("--frames", ms_frames, "Number of frames");
  ms->add_option("--width", ms_width, "Image width");
  ms->add_option("--height", ms_height, "Image height");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_command(opt);
    if (rv->parsed()) return render_views_command(rv_map, rv_poses, rv_intr, rv_out);
    if (ms->parsed()) return make_synthetic_command(ms_out, ms_frames, ms_width, ms_height);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
