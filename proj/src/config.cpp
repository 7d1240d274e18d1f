#include "sslam/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sslam {

std::vector<ConfigEntry> config_entries(AllConfig& cfg) {
  std::vector<ConfigEntry> e;
  const auto add = [&e](const char* key, auto* slot) { e.push_back({key, slot}); };

  add("render.depth_adjust_sensitivity", &cfg.render.depth_adjust_sensitivity);
  add("render.alpha_cutoff", &cfg.render.alpha_cutoff);
  add("render.transmittance_stop", &cfg.render.transmittance_stop);
  add("render.median_threshold", &cfg.render.median_threshold);
  add("render.parallel_eps", &cfg.render.parallel_eps);
  add("render.enable_unbiased_depth", &cfg.render.enable_unbiased_depth);
  add("render.enable_depth_adjust", &cfg.render.enable_depth_adjust);
  add("render.enable_depth_norm", &cfg.render.enable_depth_norm);
  add("render.use_tiles", &cfg.render.use_tiles);
  add("render.tile_size", &cfg.render.tile_size);

  add("track.iters", &cfg.track.iters);
  add("track.lr_rot", &cfg.track.lr_rot);
  add("track.lr_trans", &cfg.track.lr_trans);
  add("track.lr_final_ratio", &cfg.track.lr_final_ratio);
  add("track.adam_beta1", &cfg.track.adam_beta1);
  add("track.adam_beta2", &cfg.track.adam_beta2);
  add("track.lambda1", &cfg.track.lambda1);
  add("track.accum_mask", &cfg.track.accum_mask);
  add("track.lost_ratio", &cfg.track.lost_ratio);
  add("track.lost_min_mask", &cfg.track.lost_min_mask);
  add("track.lost_window", &cfg.track.lost_window);

  add("map.iters_map", &cfg.map.iters_map);
  add("map.attach_accum", &cfg.map.attach_accum);
  add("map.edge_low", &cfg.map.edge_low);
  add("map.edge_high", &cfg.map.edge_high);
  add("map.lambda1", &cfg.map.lambda1);
  add("map.lambda2", &cfg.map.lambda2);
  add("map.prune_opacity", &cfg.map.prune_opacity);
  add("map.init_opacity", &cfg.map.init_opacity);
  add("map.lr_center", &cfg.map.lr_center);
  add("map.lr_orientation", &cfg.map.lr_orientation);
  add("map.lr_scale", &cfg.map.lr_scale);
  add("map.lr_opacity", &cfg.map.lr_opacity);
  add("map.lr_color", &cfg.map.lr_color);
  add("map.lr_exposure", &cfg.map.lr_exposure);
  add("map.adam_beta1", &cfg.map.adam_beta1);
  add("map.adam_beta2", &cfg.map.adam_beta2);
  add("map.normal_max_rel_gap", &cfg.map.normal_max_rel_gap);

  add("pipeline.tau_k", &cfg.pipeline.tau_k);
  add("pipeline.tau_l", &cfg.pipeline.tau_l);
  add("pipeline.merge_opacity_reset", &cfg.pipeline.merge_opacity_reset);
  add("pipeline.ba_lambda1", &cfg.pipeline.ba_lambda1);
  add("pipeline.covis_overlap_min", &cfg.pipeline.covis_overlap_min);
  add("pipeline.covis_depth", &cfg.pipeline.covis_depth);
  add("pipeline.merge_map_steps", &cfg.pipeline.merge_map_steps);
  add("pipeline.ba_steps", &cfg.pipeline.ba_steps);
  add("pipeline.random_opt_steps", &cfg.pipeline.random_opt_steps);
  add("pipeline.final_refine_steps", &cfg.pipeline.final_refine_steps);
  add("pipeline.enable_keyframes", &cfg.pipeline.enable_keyframes);
  add("pipeline.enable_local_map", &cfg.pipeline.enable_local_map);
  add("pipeline.enable_random_opt", &cfg.pipeline.enable_random_opt);
  add("pipeline.enable_final_refine", &cfg.pipeline.enable_final_refine);
  return e;
}

namespace {

void assign(const ConfigEntry& entry, const std::string& value) {
  if (std::holds_alternative<double*>(entry.slot)) {
    *std::get<double*>(entry.slot) = std::stod(value);
  } else if (std::holds_alternative<int*>(entry.slot)) {
    *std::get<int*>(entry.slot) = std::stoi(value);
  } else {
    bool* b = std::get<bool*>(entry.slot);
    if (value == "true" || value == "1") {
      *b = true;
    } else if (value == "false" || value == "0") {
      *b = false;
    } else {
      throw std::invalid_argument("expected a boolean, got '" + value + "'");
    }
  }
}

std::string format(const ConfigEntry& entry) {
  char buf[64];
  if (std::holds_alternative<double*>(entry.slot)) {
    std::snprintf(buf, sizeof(buf), "%.9g", *std::get<double*>(entry.slot));
    return buf;
  }
  if (std::holds_alternative<int*>(entry.slot)) {
    return std::to_string(*std::get<int*>(entry.slot));
  }
  return *std::get<bool*>(entry.slot) ? "true" : "false";
}

std::string trim(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void load_config_file(const std::string& path, AllConfig& cfg) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  const auto entries = config_entries(cfg);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool found = false;
    for (const ConfigEntry& entry : entries) {
      if (entry.key == key) {
        try {
          assign(entry, value);
        } catch (const std::exception& ex) {
          throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + ex.what());
        }
        found = true;
        break;
      }
    }
    if (!found) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unknown key '" + key +
                               "'");
    }
  }
}

void save_config_file(const std::string& path, AllConfig cfg) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  for (const ConfigEntry& entry : config_entries(cfg)) {
    os << entry.key << " = " << format(entry) << "\n";
  }
}

std::vector<std::pair<std::string, std::string>> config_dump(AllConfig cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const ConfigEntry& entry : config_entries(cfg)) {
    out.emplace_back(entry.key, format(entry));
  }
  return out;
}

}  // namespace sslam
