#include "sslam/io/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sslam/io/png_io.hpp"

namespace sslam {

namespace {

constexpr double kMaxAssociationGap = 0.02;  // seconds

struct ListEntry {
  double timestamp;
  std::string value;
};

std::vector<ListEntry> read_list(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::vector<ListEntry> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    ListEntry e;
    if (ss >> e.timestamp >> e.value) out.push_back(e);
  }
  std::sort(out.begin(), out.end(),
            [](const ListEntry& a, const ListEntry& b) { return a.timestamp < b.timestamp; });
  return out;
}

int nearest_unused(const std::vector<ListEntry>& entries, std::vector<char>& used, double t) {
  int best = -1;
  double best_gap = kMaxAssociationGap;
  for (int i = 0; i < static_cast<int>(entries.size()); ++i) {
    if (used[static_cast<size_t>(i)]) continue;
    const double gap = std::abs(entries[static_cast<size_t>(i)].timestamp - t);
    if (gap <= best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  return best;
}

Intrinsicsd intrinsics_for_dir(const std::string& dir, int width, int height) {
  const std::string path = dir + "/intrinsics.txt";
  if (std::filesystem::exists(path)) return load_intrinsics(path);
  // Common pinhole defaults for 640x480 RGB-D sensors, rescaled to the
  // actual image size.
  Intrinsicsd intr;
  intr.fx = 525.0 * width / 640.0;
  intr.fy = 525.0 * height / 480.0;
  intr.cx = 319.5 * width / 640.0;
  intr.cy = 239.5 * height / 480.0;
  intr.width = width;
  intr.height = height;
  return intr;
}

}  // namespace

Intrinsicsd load_intrinsics(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  Intrinsicsd intr;
  if (!(is >> intr.fx >> intr.fy >> intr.cx >> intr.cy >> intr.width >> intr.height)) {
    throw std::runtime_error("malformed intrinsics file: " + path);
  }
  return intr;
}

void save_intrinsics(const std::string& path, const Intrinsicsd& intr) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  char line[160];
  std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %.9g %d %d\n", intr.fx, intr.fy, intr.cx,
                intr.cy, intr.width, intr.height);
  os << line;
}

LoadedSequence load_tum(const std::string& dir) {
  const auto rgb = read_list(dir + "/rgb.txt");
  const auto depth = read_list(dir + "/depth.txt");
  LoadedSequence out;
  out.groundtruth = load_trajectory(dir + "/groundtruth.txt");

  std::vector<char> depth_used(depth.size(), 0);
  int id = 0;
  for (const ListEntry& r : rgb) {
    const int d = nearest_unused(depth, depth_used, r.timestamp);
    if (d < 0) {
      ++out.skipped;
      continue;
    }
    depth_used[static_cast<size_t>(d)] = 1;
    auto frame = std::make_shared<Frame>();
    frame->color = load_color_png(dir + "/" + r.value);
    frame->depth = load_depth_png(dir + "/" + depth[static_cast<size_t>(d)].value);
    frame->timestamp = r.timestamp;
    frame->id = id++;
    frame->intrinsics = intrinsics_for_dir(dir, frame->color.width(), frame->color.height());
    out.frames.push_back(std::move(frame));
  }
  if (out.frames.empty()) {
    throw std::runtime_error("no associable rgb/depth pairs under " + dir);
  }
  if (out.skipped > 0) {
    std::fprintf(stderr, "load_tum: skipped %d frames without a depth match\n", out.skipped);
  }
  return out;
}

LoadedSequence load_synthetic_dir(const std::string& dir) {
  LoadedSequence out;
  out.groundtruth = load_trajectory(dir + "/poses.txt");
  if (out.groundtruth.empty()) throw std::runtime_error("empty poses.txt under " + dir);
  const Intrinsicsd intr = load_intrinsics(dir + "/intrinsics.txt");
  char name[64];
  for (int i = 0; i < static_cast<int>(out.groundtruth.size()); ++i) {
    auto frame = std::make_shared<Frame>();
    std::snprintf(name, sizeof(name), "/color_%06d.png", i);
    frame->color = load_color_png(dir + name);
    std::snprintf(name, sizeof(name), "/depth_%06d.png", i);
    frame->depth = load_depth_png(dir + name);
    frame->timestamp = out.groundtruth[static_cast<size_t>(i)].timestamp;
    frame->id = i;
    frame->intrinsics = intr;
    out.frames.push_back(std::move(frame));
  }
  return out;
}

void save_synthetic_dir(const std::string& dir, const std::vector<FramePtr>& frames,
                        const Trajectory& groundtruth) {
  std::filesystem::create_directories(dir);
  save_trajectory(dir + "/poses.txt", groundtruth);
  if (!frames.empty()) save_intrinsics(dir + "/intrinsics.txt", frames.front()->intrinsics);
  char name[64];
  for (int i = 0; i < static_cast<int>(frames.size()); ++i) {
    std::snprintf(name, sizeof(name), "/color_%06d.png", i);
    save_color_png(dir + name, frames[static_cast<size_t>(i)]->color);
    std::snprintf(name, sizeof(name), "/depth_%06d.png", i);
    save_depth_png(dir + name, frames[static_cast<size_t>(i)]->depth);
  }
}

}  // namespace sslam
