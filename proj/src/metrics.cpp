#include "sslam/io/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <Eigen/Geometry>

namespace sslam {

namespace {

// Nearest-timestamp pairing; both trajectories assumed sorted in time.
std::vector<std::pair<int, int>> associate(const Trajectory& a, const Trajectory& b,
                                           double max_dt) {
  std::vector<std::pair<int, int>> pairs;
  int j = 0;
  for (int i = 0; i < static_cast<int>(a.size()); ++i) {
    while (j + 1 < static_cast<int>(b.size()) &&
           std::abs(b[j + 1].timestamp - a[i].timestamp) <=
               std::abs(b[j].timestamp - a[i].timestamp)) {
      ++j;
    }
    if (std::abs(b[j].timestamp - a[i].timestamp) <= max_dt) pairs.emplace_back(i, j);
  }
  return pairs;
}

}  // namespace

double ate_rmse(const Trajectory& estimate, const Trajectory& truth, double max_dt) {
  const auto pairs = associate(estimate, truth, max_dt);
  if (pairs.size() < 2) {
    throw std::invalid_argument("ate_rmse: fewer than two associated poses");
  }
  Eigen::MatrixXd src(3, pairs.size()), dst(3, pairs.size());
  for (size_t k = 0; k < pairs.size(); ++k) {
    src.col(static_cast<Eigen::Index>(k)) = estimate[pairs[k].first].pose.t;
    dst.col(static_cast<Eigen::Index>(k)) = truth[pairs[k].second].pose.t;
  }
  const Eigen::Matrix4d align = Eigen::umeyama(src, dst, false);
  double sq_sum = 0;
  for (Eigen::Index k = 0; k < src.cols(); ++k) {
    const Eigen::Vector3d mapped =
        align.topLeftCorner<3, 3>() * src.col(k) + align.topRightCorner<3, 1>();
    sq_sum += (mapped - dst.col(k)).squaredNorm();
  }
  return std::sqrt(sq_sum / static_cast<double>(src.cols()));
}

double psnr(const ImageRGB& a, const ImageRGB& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
  const double n = static_cast<double>(a.r.size()) * 3.0;
  const double mse = ((a.r - b.r).square().sum() + (a.g - b.g).square().sum() +
                      (a.b - b.b).square().sum()) /
                     n;
  if (mse <= 0) return 99.0;
  return std::min(10.0 * std::log10(1.0 / mse), 99.0);
}

double depth_l1(const Eigen::ArrayXXd& rendered, const Eigen::ArrayXXd& truth,
                const MaskXX& valid) {
  if (rendered.rows() != truth.rows() || rendered.cols() != truth.cols() ||
      rendered.rows() != valid.rows() || rendered.cols() != valid.cols()) {
    throw std::invalid_argument("depth_l1: shape mismatch");
  }
  const long count = valid.count();
  if (count == 0) {
    std::cerr << "depth_l1: empty valid mask\n";
    return std::numeric_limits<double>::quiet_NaN();
  }
  return valid.select((rendered - truth).abs(), 0.0).sum() / static_cast<double>(count);
}

void save_trajectory(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  char line[256];
  for (const TrajectoryPoint& p : traj) {
    std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n",
                  p.timestamp, p.pose.t.x(), p.pose.t.y(), p.pose.t.z(), p.pose.q.x(),
                  p.pose.q.y(), p.pose.q.z(), p.pose.q.w());
    os << line;
  }
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  Trajectory out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    TrajectoryPoint p;
    double qx, qy, qz, qw;
    if (!(ss >> p.timestamp >> p.pose.t.x() >> p.pose.t.y() >> p.pose.t.z() >> qx >> qy >>
          qz >> qw)) {
      continue;
    }
    p.pose.q = Eigen::Quaterniond(qw, qx, qy, qz).normalized();
    out.push_back(p);
  }
  return out;
}

}  // namespace sslam
