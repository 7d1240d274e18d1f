#pragma once

#include <string>
#include <vector>

#include "sslam/core/image.hpp"
#include "sslam/io/metrics.hpp"

namespace sslam {

struct LoadedSequence {
  std::vector<FramePtr> frames;
  Trajectory groundtruth;
  int skipped = 0;  // frames dropped for lack of a depth match
};

/// TUM-style directory: rgb.txt / depth.txt / groundtruth.txt listings with
/// per-line "timestamp value" entries, RGB as 8-bit PNG and depth as 16-bit
/// PNG at 1/5000 m per unit. Color/depth pairs are associated by nearest
/// timestamp within 0.02 s. Intrinsics come from an intrinsics.txt in the
/// directory when present, otherwise the common 640x480 defaults.
LoadedSequence load_tum(const std::string& dir);

/// Native sequence directory: poses.txt (trajectory-format lines),
/// intrinsics.txt, and color_NNNNNN.png / depth_NNNNNN.png per frame.
LoadedSequence load_synthetic_dir(const std::string& dir);
void save_synthetic_dir(const std::string& dir, const std::vector<FramePtr>& frames,
                        const Trajectory& groundtruth);

/// "fx fy cx cy width height" on one line.
Intrinsicsd load_intrinsics(const std::string& path);
void save_intrinsics(const std::string& path, const Intrinsicsd& intr);

}  // namespace sslam
