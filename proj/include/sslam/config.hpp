#pragma once

#include <string>
#include <variant>
#include <vector>

#include "sslam/map/mapper.hpp"
#include "sslam/render/renderer.hpp"
#include "sslam/slam/pipeline.hpp"
#include "sslam/track/tracker.hpp"

namespace sslam {

struct AllConfig {
  RenderConfig render;
  TrackConfig track;
  MapConfig map;
  PipelineConfig pipeline;
};

struct ConfigEntry {
  std::string key;
  std::variant<double*, int*, bool*> slot;
};

/// Ordered registry of every tunable, used both by the flat "key = value"
/// config-file parser and by the provenance echo in the metrics output.
std::vector<ConfigEntry> config_entries(AllConfig& cfg);

/// Lines of "key = value" with '#' comments; unknown keys and unparsable
/// values are errors.
void load_config_file(const std::string& path, AllConfig& cfg);
void save_config_file(const std::string& path, AllConfig cfg);

/// key -> value-as-string for every entry, in registry order.
std::vector<std::pair<std::string, std::string>> config_dump(AllConfig cfg);

}  // namespace sslam
