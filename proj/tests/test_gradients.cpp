#include <doctest.h>

#include <random>

#include "sslam/opt/pose_var.hpp"
#include "sslam/render/renderer.hpp"
#include "sslam/track/tracker.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace sslam;

namespace {

// Loss that is linear in the rendered maps with fixed random coefficients:
// it exercises the full backward chain with no kinks of its own.
struct LinearLoss {
  OutputGrads coeffs;

  LinearLoss(int height, int width, std::uint64_t seed) {
    coeffs.setZero(height, width);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        coeffs.depth(y, x) = u(rng);
        coeffs.accum(y, x) = u(rng);
        coeffs.color.set(y, x, {u(rng), u(rng), u(rng)});
      }
    }
  }

  double operator()(const RenderOutput& out) const {
    return (coeffs.depth * out.depth).sum() + (coeffs.accum * out.accum).sum() +
           (coeffs.color.r * out.color.r).sum() + (coeffs.color.g * out.color.g).sum() +
           (coeffs.color.b * out.color.b).sum();
  }
};

constexpr double kH = 1e-5;
constexpr double kRelTol = 1e-3;
constexpr double kAbsFloor = 1e-8;

}  // namespace

TEST_CASE("render_backward matches finite differences of a linear loss") {
  int scenes_checked = 0;
  std::uint64_t seed = 500;
  while (scenes_checked < 8) {
    REQUIRE(seed < 600);  // the rejection loop must terminate
    oracle::Scene scene = oracle::random_scene(seed++);
    Posed w2c = inverse(scene.camera);
    const RenderConfig cfg;
    const LinearLoss loss(scene.intr.height, scene.intr.width, seed);

    const auto eval = [&]() -> gradcheck::Probe {
      RenderTrace trace;
      const RenderOutput out = render_from_camera(scene.map, w2c, scene.intr, cfg, &trace);
      return {loss(out), gradcheck::trace_signature(trace)};
    };

    RenderTrace trace;
    const RenderOutput out = render_from_camera(scene.map, w2c, scene.intr, cfg, &trace);
    const gradcheck::Signature base = gradcheck::trace_signature(trace);
    const RenderGradients grads = render_backward(scene.map, trace, cfg, loss.coeffs);

    std::vector<gradcheck::ParamSlot> slots = gradcheck::map_param_slots(scene.map, grads);
    const auto pose_slots = gradcheck::pose_param_slots(w2c, grads);
    slots.insert(slots.end(), pose_slots.begin(), pose_slots.end());

    bool scene_ok = true;
    int checked = 0;
    for (const gradcheck::ParamSlot& slot : slots) {
      const auto fd = gradcheck::signed_central_difference(eval, slot.value, kH, base);
      if (!fd.valid) {
        scene_ok = false;
        break;
      }
      CHECK_MESSAGE(gradcheck::close(*slot.analytic, fd.derivative, kRelTol, kAbsFloor),
                    "analytic=" << *slot.analytic << " fd=" << fd.derivative << " seed="
                                << seed - 1 << " slot=" << checked);
      ++checked;
    }
    if (scene_ok) ++scenes_checked;
  }
}

TEST_CASE("render_backward respects the ablation switches") {
  std::uint64_t seed = 700;
  for (int variant = 0; variant < 3; ++variant) {
    RenderConfig cfg;
    if (variant == 0) cfg.enable_depth_adjust = false;
    if (variant == 1) cfg.enable_depth_norm = false;
    if (variant == 2) cfg.enable_unbiased_depth = false;

    int scenes_checked = 0;
    while (scenes_checked < 2) {
      REQUIRE(seed < 800);
      oracle::Scene scene = oracle::random_scene(seed++);
      Posed w2c = inverse(scene.camera);
      const LinearLoss loss(scene.intr.height, scene.intr.width, seed);

      const auto eval = [&]() -> gradcheck::Probe {
        RenderTrace trace;
        const RenderOutput out = render_from_camera(scene.map, w2c, scene.intr, cfg, &trace);
        return {loss(out), gradcheck::trace_signature(trace)};
      };

      RenderTrace trace;
      render_from_camera(scene.map, w2c, scene.intr, cfg, &trace);
      const gradcheck::Signature base = gradcheck::trace_signature(trace);
      const RenderGradients grads = render_backward(scene.map, trace, cfg, loss.coeffs);

      std::vector<gradcheck::ParamSlot> slots = gradcheck::map_param_slots(scene.map, grads);
      const auto pose_slots = gradcheck::pose_param_slots(w2c, grads);
      slots.insert(slots.end(), pose_slots.begin(), pose_slots.end());

      bool scene_ok = true;
      for (const gradcheck::ParamSlot& slot : slots) {
        const auto fd = gradcheck::signed_central_difference(eval, slot.value, kH, base);
        if (!fd.valid) {
          scene_ok = false;
          break;
        }
        CHECK(gradcheck::close(*slot.analytic, fd.derivative, kRelTol, kAbsFloor));
      }
      if (scene_ok) ++scenes_checked;
    }
  }
}

TEST_CASE("zero upstream gradient gives zero gradients") {
  const oracle::Scene scene = oracle::random_scene(900);
  const RenderConfig cfg;
  RenderTrace trace;
  render_from_camera(scene.map, inverse(scene.camera), scene.intr, cfg, &trace);
  OutputGrads zero;
  zero.setZero(scene.intr.height, scene.intr.width);
  const RenderGradients grads = render_backward(scene.map, trace, cfg, zero);
  CHECK(grads.d_center.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.d_orientation.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.d_scale.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.d_opacity.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.d_color.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.d_pose.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single-surfel color gradient equals the blending weight") {
  RenderConfig cfg;
  SurfelMapd map;
  Surfeld s;
  s.center = {0, 0, 2};
  s.su = s.sv = 0.5;
  s.opacity = 0.8;
  s.color = {0.3, 0.4, 0.5};
  map.add(s);

  Intrinsicsd intr;
  intr.width = intr.height = 9;
  intr.fx = intr.fy = 8;
  intr.cx = intr.cy = 4;

  RenderTrace trace;
  const RenderOutput out = render_from_camera(map, Posed::Identity(), intr, cfg, &trace);

  // Upstream gradient of 1 on the red channel of the center pixel.
  OutputGrads up;
  up.setZero(9, 9);
  up.color.r(4, 4) = 1.0;
  const RenderGradients grads = render_backward(map, trace, cfg, up);
  const double w = trace.at(4, 4).hits.at(0).w;
  CHECK(out.accum(4, 4) == doctest::Approx(w));
  CHECK(grads.d_color(0, 0) == doctest::Approx(w).epsilon(1e-12));
  CHECK(grads.d_color(0, 1) == 0.0);
}

TEST_CASE("reg-loss gradients flow through the hit-level hooks") {
  std::uint64_t seed = 1000;
  int scenes_checked = 0;
  while (scenes_checked < 3) {
    REQUIRE(seed < 1100);
    oracle::Scene scene = oracle::random_scene(seed++);
    Posed w2c = inverse(scene.camera);
    const RenderConfig cfg;

    // Scalar loss: the depth-concentration cost alone.
    const auto eval = [&]() -> gradcheck::Probe {
      RenderTrace trace;
      render_from_camera(scene.map, w2c, scene.intr, cfg, &trace);
      double value = 0;
      long rays = 0;
      for (const PixelTrace& px : trace.pixels) {
        if (px.median < 0) continue;
        ++rays;
        const double dm = px.hits[static_cast<size_t>(px.median)].d;
        for (const BlendedHit& h : px.hits) value += h.w * (h.d_adj - dm) * (h.d_adj - dm);
      }
      if (rays > 0) value /= static_cast<double>(rays);
      return {value, gradcheck::trace_signature(trace)};
    };

    RenderTrace trace;
    render_from_camera(scene.map, w2c, scene.intr, cfg, &trace);
    const gradcheck::Signature base = gradcheck::trace_signature(trace);

    // reg_loss produces per-hit gradients; the renderer backward folds them
    // through the blend.
    const auto reg = [&] {
      double value = 0;
      long rays = 0;
      for (const PixelTrace& px : trace.pixels) {
        if (px.median >= 0) ++rays;
      }
      std::vector<PixelHitGrads> hit_grads(trace.pixels.size());
      for (size_t p = 0; p < trace.pixels.size(); ++p) {
        const PixelTrace& px = trace.pixels[p];
        if (px.median < 0) continue;
        const double dm = px.hits[static_cast<size_t>(px.median)].d;
        PixelHitGrads& hg = hit_grads[p];
        hg.d_w.assign(px.hits.size(), 0.0);
        hg.d_dadj.assign(px.hits.size(), 0.0);
        for (size_t i = 0; i < px.hits.size(); ++i) {
          const double dev = px.hits[i].d_adj - dm;
          value += px.hits[i].w * dev * dev;
          hg.d_w[i] = dev * dev / static_cast<double>(rays);
          hg.d_dadj[i] = 2.0 * px.hits[i].w * dev / static_cast<double>(rays);
          hg.d_median_depth -= 2.0 * px.hits[i].w * dev / static_cast<double>(rays);
        }
      }
      return hit_grads;
    }();

    OutputGrads zero;
    zero.setZero(scene.intr.height, scene.intr.width);
    const RenderGradients grads = render_backward(scene.map, trace, cfg, zero, &reg);

    std::vector<gradcheck::ParamSlot> slots = gradcheck::map_param_slots(scene.map, grads);
    const auto pose_slots = gradcheck::pose_param_slots(w2c, grads);
    slots.insert(slots.end(), pose_slots.begin(), pose_slots.end());

    bool scene_ok = true;
    for (const gradcheck::ParamSlot& slot : slots) {
      const auto fd = gradcheck::signed_central_difference(eval, slot.value, kH, base);
      if (!fd.valid) {
        scene_ok = false;
        break;
      }
      CHECK(gradcheck::close(*slot.analytic, fd.derivative, kRelTol, kAbsFloor));
    }
    if (scene_ok) ++scenes_checked;
  }
}

TEST_CASE("PoseVar delta parametrization reproduces composed finite differences") {
  // The optimized transform is value() = delta ∘ base; the renderer reports
  // gradients w.r.t. value() parameters. Check the pull-back to the delta
  // parameters against finite differences of a loss that, like the
  // renderer, depends on the pose only through its rotation matrix and
  // translation.
  std::mt19937_64 rng(1200);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 10; ++trial) {
    Posed base;
    base.q = Eigen::Quaterniond(u(rng), u(rng), u(rng), u(rng)).normalized();
    base.t = Eigen::Vector3d(u(rng), u(rng), u(rng));

    Eigen::Vector4d dq = Eigen::Vector4d(0.2 * u(rng), 0.2 * u(rng), 0.2 * u(rng), 1.0);
    dq.normalize();
    Eigen::Vector3d dt(u(rng), u(rng), u(rng));

    Eigen::Matrix3d g_rot;
    for (int i = 0; i < 9; ++i) g_rot(i / 3, i % 3) = u(rng);
    const Eigen::Vector3d ct(u(rng), u(rng), u(rng));

    const auto f = [&](const Eigen::Vector4d& q_delta, const Eigen::Vector3d& t_delta) {
      Posed delta;
      delta.q.coeffs() = q_delta.normalized();
      delta.t = t_delta;
      const Posed v = compose(delta, base);
      return (g_rot.array() * quat_to_rotation(v.q.coeffs()).array()).sum() + ct.dot(v.t);
    };

    // Gradient w.r.t. value() parameters, as the renderer would report it.
    Posed delta0;
    delta0.q.coeffs() = dq;
    delta0.t = dt;
    const Posed v0 = compose(delta0, base);
    Eigen::Matrix<double, 7, 1> g_value;
    g_value.head<4>() = quat_rotation_backward(v0.q.coeffs(), g_rot);
    g_value.tail<3>() = ct;

    // Pull-back mirroring PoseVar::apply.
    Eigen::Vector4d g_dq = quat_right_product_matrix(base.q).transpose() * g_value.head<4>();
    g_dq += quat_rotation_backward(dq, ct * base.t.transpose());
    g_dq = tangent_project(dq, g_dq);
    const Eigen::Vector3d g_dt = g_value.tail<3>();

    for (int k = 0; k < 4; ++k) {
      Eigen::Vector4d probe = dq;
      const double fd = oracle::central_difference(
          [&] { return f(probe, dt); }, &probe[k], 1e-6);
      CHECK(g_dq[k] == doctest::Approx(fd).epsilon(1e-5));
    }
    for (int k = 0; k < 3; ++k) {
      Eigen::Vector3d probe = dt;
      const double fd = oracle::central_difference(
          [&] { return f(dq, probe); }, &probe[k], 1e-6);
      CHECK(g_dt[k] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}
