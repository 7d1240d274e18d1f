#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace sslam {

/// Adam over a flat parameter array. Moment buffers grow with the parameter
/// set; rows can be appended (new parameters start with zero state) or
/// compacted when parameters are removed.
class Adam {
 public:
  Adam() = default;
  Adam(double beta1, double beta2, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void reset(Eigen::Index n) {
    m_.setZero(n);
    v_.setZero(n);
    step_ = 0;
  }

  void append(Eigen::Index extra) {
    const Eigen::Index n = m_.size();
    m_.conservativeResize(n + extra);
    v_.conservativeResize(n + extra);
    m_.tail(extra).setZero();
    v_.tail(extra).setZero();
  }

  /// Drops the rows not listed in `keep` (ascending indices into the current
  /// buffers).
  void compact(const std::vector<Eigen::Index>& keep) {
    Eigen::ArrayXd m2(keep.size()), v2(keep.size());
    for (size_t i = 0; i < keep.size(); ++i) {
      m2[static_cast<Eigen::Index>(i)] = m_[keep[i]];
      v2[static_cast<Eigen::Index>(i)] = v_[keep[i]];
    }
    m_.swap(m2);
    v_.swap(v2);
  }

  Eigen::Index size() const { return m_.size(); }

  /// One update: params -= lr * mhat / (sqrt(vhat) + eps). A zero learning
  /// rate leaves both the parameters and the moment state untouched.
  void step(Eigen::Ref<Eigen::ArrayXd> params, const Eigen::ArrayXd& grad, double lr) {
    if (lr == 0.0) return;
    ++step_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.square();
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    params -= lr * (m_ / c1) / ((v_ / c2).sqrt() + eps_);
  }

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  Eigen::ArrayXd m_, v_;
  std::int64_t step_ = 0;
};

/// Exponential learning-rate schedule: lr(k) decays from lr0 to
/// final_ratio * lr0 over `iters` steps.
inline double decayed_lr(double lr0, double final_ratio, int k, int iters) {
  if (iters <= 1) return lr0;
  const double frac = static_cast<double>(k) / static_cast<double>(iters - 1);
  return lr0 * std::pow(final_ratio, frac);
}

}  // namespace sslam
