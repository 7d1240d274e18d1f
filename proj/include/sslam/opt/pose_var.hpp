#pragma once

#include <Eigen/Core>

#include "sslam/core/pose.hpp"
#include "sslam/core/quat_grad.hpp"
#include "sslam/opt/adam.hpp"

namespace sslam {

/// Rigid transform optimized as a delta on top of a fixed base estimate:
/// value() = delta ∘ base, with the delta starting at identity. Keeping the
/// moving part a left factor makes the optimization trajectory independent
/// of the frame the base is expressed in.
class PoseVar {
 public:
  PoseVar(const Posed& base, double beta1, double beta2)
      : base_(base), adam_q_(beta1, beta2), adam_t_(beta1, beta2) {
    dq_ << 0, 0, 0, 1;
    dt_.setZero();
    adam_q_.reset(4);
    adam_t_.reset(3);
  }

  Posed delta() const {
    Posed d;
    d.q = Eigen::Quaterniond(dq_[3], dq_[0], dq_[1], dq_[2]).normalized();
    d.t = dt_;
    return d;
  }

  Posed value() const { return compose(delta(), base_); }

  /// One Adam update from the gradient w.r.t. value() parameters
  /// (qx, qy, qz, qw, tx, ty, tz).
  void apply(const Eigen::Matrix<double, 7, 1>& g_value, double lr_rot, double lr_trans) {
    const Eigen::Vector4d g_q = g_value.head<4>();
    const Eigen::Vector3d g_t = g_value.tail<3>();
    // value.q = dq ⊗ base.q ; value.t = dt + R(dq) * base.t
    Eigen::Vector4d g_dq = quat_right_product_matrix(base_.q).transpose() * g_q;
    g_dq += quat_rotation_backward(dq_, g_t * base_.t.transpose());
    g_dq = tangent_project(dq_, g_dq);

    Eigen::ArrayXd q_arr = dq_.array();
    adam_q_.step(q_arr, g_dq.array(), lr_rot);
    dq_ = q_arr.matrix();
    dq_.normalize();

    Eigen::ArrayXd t_arr = dt_.array();
    adam_t_.step(t_arr, g_t.array(), lr_trans);
    dt_ = t_arr.matrix();
  }

 private:
  Posed base_;
  Eigen::Vector4d dq_;
  Eigen::Vector3d dt_;
  Adam adam_q_, adam_t_;
};

/// Pulls a gradient w.r.t. the parameters of (left ∘ x) back to the
/// parameters of x for a constant left factor.
inline Eigen::Matrix<double, 7, 1> chain_left_compose(const Posed& left,
                                                      const Eigen::Matrix<double, 7, 1>& g) {
  Eigen::Matrix<double, 7, 1> out;
  out.head<4>() = quat_left_product_matrix(left.q).transpose() * g.head<4>();
  out.tail<3>() = left.q.toRotationMatrix().transpose() * g.tail<3>();
  return out;
}

}  // namespace sslam
