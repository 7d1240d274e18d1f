#include <doctest.h>

#include <random>

#include "sslam/track/tracker.hpp"
#include "support/oracles.hpp"
#include "support/scenes.hpp"

using namespace sslam;

namespace {

struct TrackFixture {
  SurfelMapd map;
  Intrinsicsd intr;
  Posed gt;
  FramePtr frame;
  RenderConfig rcfg;

  explicit TrackFixture(int resolution = 48) {
    intr = scenes::intrinsics(resolution, resolution);
    map = scenes::patch_map(two_plane_patches(1.5, 3.0), 0.06, 0.95);
    gt = scenes::two_plane_camera();
    frame = scenes::frame_from_map(map, gt, intr, rcfg);
  }
};

}  // namespace

TEST_CASE("init_pose: constant velocity extrapolation") {
  SUBCASE("no history or zero velocity returns the previous pose") {
    Posed prev = pose_from_axis_angle<double>(Eigen::Vector3d::UnitY(), 0.3, {1, 2, 3});
    CHECK(rotation_distance(init_pose(prev, nullptr), prev) < 1e-15);
    const Posed same = init_pose(prev, &prev);
    CHECK(rotation_distance(same, prev) < 1e-12);
    CHECK(translation_distance(same, prev) < 1e-12);
  }

  SUBCASE("linear translation doubles the step") {
    const Posed prev2;
    Posed prev;
    prev.t = {0, 0, 0.1};
    const Posed next = init_pose(prev, &prev2);
    CHECK((next.t - Eigen::Vector3d(0, 0, 0.2)).norm() < 1e-12);
  }

  SUBCASE("steady rotation extrapolates to the matrix-product prediction") {
    const double step = 5.0 * M_PI / 180.0;
    const Posed p1 = pose_from_axis_angle<double>(Eigen::Vector3d::UnitY(), step);
    const Posed p2 = pose_from_axis_angle<double>(Eigen::Vector3d::UnitY(), 2 * step);
    const Posed next = init_pose(p2, &p1);
    const Posed expected = pose_from_axis_angle<double>(Eigen::Vector3d::UnitY(), 3 * step);
    CHECK(rotation_distance(next, expected) < 1e-9);
  }
}

TEST_CASE("tracking_loss") {
  TrackFixture fix;
  const TrackConfig cfg;
  const RenderOutput out = render(fix.map, fix.gt, fix.intr, fix.rcfg);

  SUBCASE("matching render gives zero loss") {
    const TrackingLoss loss = tracking_loss(out, *fix.frame, cfg);
    CHECK(loss.value == 0.0);
    CHECK(loss.masked_fraction > 0.5);
  }

  SUBCASE("uniform depth offset over the mask is the offset") {
    Frame shifted = *fix.frame;
    for (int y = 0; y < fix.intr.height; ++y) {
      for (int x = 0; x < fix.intr.width; ++x) {
        if (shifted.depth(y, x) > 0 && out.accum(y, x) > cfg.accum_mask) {
          shifted.depth(y, x) += 0.1;
        }
      }
    }
    const TrackingLoss loss = tracking_loss(out, shifted, cfg);
    CHECK(loss.value == doctest::Approx(0.1).epsilon(1e-9));
  }

  SUBCASE("random observations match a per-pixel loop oracle") {
    std::mt19937_64 rng(321);
    std::uniform_real_distribution<double> u(0, 1);
    Frame noisy = *fix.frame;
    for (int y = 0; y < fix.intr.height; ++y) {
      for (int x = 0; x < fix.intr.width; ++x) {
        noisy.depth(y, x) = u(rng) > 0.1 ? 0.5 + 3 * u(rng) : 0.0;
        noisy.color.set(y, x, {u(rng), u(rng), u(rng)});
      }
    }
    const TrackingLoss loss = tracking_loss(out, noisy, cfg);

    long n = 0;
    for (int y = 0; y < fix.intr.height; ++y) {
      for (int x = 0; x < fix.intr.width; ++x) {
        if (out.accum(y, x) > cfg.accum_mask && noisy.depth(y, x) > 0) ++n;
      }
    }
    double expected = 0;
    for (int y = 0; y < fix.intr.height; ++y) {
      for (int x = 0; x < fix.intr.width; ++x) {
        if (!(out.accum(y, x) > cfg.accum_mask && noisy.depth(y, x) > 0)) continue;
        expected += std::abs(out.depth(y, x) - noisy.depth(y, x)) / n;
        for (int c = 0; c < 3; ++c) {
          expected += cfg.lambda1 *
                      std::abs(out.color.at(y, x)[c] - noisy.color.at(y, x)[c]) / (3.0 * n);
        }
      }
    }
    CHECK(loss.value == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("resolution mismatch is a contract violation") {
    Frame small = *fix.frame;
    small.depth.resize(8, 8);
    small.color.resize(8, 8);
    CHECK_THROWS_AS(tracking_loss(out, small, cfg), std::invalid_argument);
  }
}

TEST_CASE("track: empty map is an error") {
  TrackFixture fix;
  const SurfelMapd empty;
  Tracker tracker({}, fix.rcfg);
  CHECK_THROWS_AS(tracker.track(empty, *fix.frame, Posed::Identity()),
                  std::invalid_argument);
}

TEST_CASE("track: ground-truth init is a fixed point") {
  TrackFixture fix;
  TrackConfig cfg;
  Tracker tracker(cfg, fix.rcfg);
  const TrackResult res = tracker.track(fix.map, *fix.frame, fix.gt);
  CHECK(res.final_loss < 1e-9);
  CHECK(rotation_distance(res.pose, fix.gt) < 1e-5);
  CHECK(translation_distance(res.pose, fix.gt) < 1e-5);
  CHECK(!res.lost);
}

TEST_CASE("track: recovers small pose perturbations") {
  TrackFixture fix;
  TrackConfig cfg;
  cfg.iters = 100;
  std::mt19937_64 rng(777);
  int recovered = 0;
  const int trials = 5;
  for (int i = 0; i < trials; ++i) {
    Tracker tracker(cfg, fix.rcfg);
    const Posed init = scenes::perturbed(fix.gt, rng, 1.0 * M_PI / 180.0, 0.01);
    const TrackResult res = tracker.track(fix.map, *fix.frame, init);
    if (rotation_distance(res.pose, fix.gt) < 0.1 * M_PI / 180.0 &&
        translation_distance(res.pose, fix.gt) < 1e-3) {
      ++recovered;
    }
  }
  CHECK(recovered == trials);
}

TEST_CASE("track: tracked loss never exceeds the initial loss") {
  TrackFixture fix;
  TrackConfig cfg;
  cfg.iters = 30;
  std::mt19937_64 rng(888);
  for (int i = 0; i < 3; ++i) {
    const Posed init = scenes::perturbed(fix.gt, rng, 1.5 * M_PI / 180.0, 0.015);
    const RenderOutput at_init = render(fix.map, init, fix.intr, fix.rcfg);
    const double initial = tracking_loss(at_init, *fix.frame, cfg).value;
    Tracker tracker(cfg, fix.rcfg);
    const TrackResult res = tracker.track(fix.map, *fix.frame, init);
    CHECK(res.final_loss <= initial + 1e-15);
  }
}

TEST_CASE("track: frame observing unmapped space is lost") {
  TrackFixture fix;
  Posed away;  // looking at the back of the scene from far behind
  away.q = Eigen::Quaterniond(Eigen::AngleAxisd(M_PI, Eigen::Vector3d::UnitY()));
  away.t = {0, 0, -6};
  Tracker tracker({}, fix.rcfg);
  const TrackResult res = tracker.track(fix.map, *fix.frame, away);
  CHECK(res.masked_fraction < 0.01);
  CHECK(res.lost);
}

TEST_CASE("track: pixels outside the opacity mask contribute no pose gradient") {
  TrackFixture fix;
  const TrackConfig cfg;
  RenderTrace trace;
  const RenderOutput out =
      render_from_camera(fix.map, inverse(fix.gt), fix.intr, fix.rcfg, &trace);

  // Garble the observation wherever the mask is off; the pose gradient must
  // not move.
  Frame garbled = *fix.frame;
  Frame base = *fix.frame;
  for (int y = 0; y < fix.intr.height; ++y) {
    for (int x = 0; x < fix.intr.width; ++x) {
      if (out.accum(y, x) > cfg.accum_mask) {
        garbled.depth(y, x) += 0.05;  // keep the masked gradient nonzero
        base.depth(y, x) += 0.05;
      } else {
        garbled.color.set(y, x, {1, 0, 1});
        garbled.depth(y, x) = 9.0;
      }
    }
  }

  const TrackingLoss l1 = tracking_loss(out, base, cfg);
  const TrackingLoss l2 = tracking_loss(out, garbled, cfg);
  const RenderGradients g1 = render_backward(fix.map, trace, fix.rcfg, l1.grads);
  const RenderGradients g2 = render_backward(fix.map, trace, fix.rcfg, l2.grads);
  CHECK((g1.d_pose - g2.d_pose).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g1.d_pose.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("track: rigidly moving the whole problem moves the answer rigidly") {
  TrackFixture fix;
  TrackConfig cfg;
  cfg.iters = 25;
  std::mt19937_64 rng(999);
  const Posed init = scenes::perturbed(fix.gt, rng, 1.0 * M_PI / 180.0, 0.01);

  Tracker tracker_a(cfg, fix.rcfg);
  const TrackResult base = tracker_a.track(fix.map, *fix.frame, init);

  const Posed world_shift = pose_from_axis_angle<double>(
      Eigen::Vector3d(1, 2, -1).normalized(), 0.8, {2.0, -1.0, 0.5});
  SurfelMapd moved;
  for (const Surfeld& s : fix.map.surfels) {
    moved.add(transform_surfel(s, world_shift));
  }
  Tracker tracker_b(cfg, fix.rcfg);
  const TrackResult shifted =
      tracker_b.track(moved, *fix.frame, compose(world_shift, init));

  const Posed expected = compose(world_shift, base.pose);
  CHECK(rotation_distance(shifted.pose, expected) < 1e-6);
  CHECK(translation_distance(shifted.pose, expected) < 1e-6);
}

TEST_CASE("track: loss history flags outlier frames") {
  TrackFixture fix;
  TrackConfig cfg;
  cfg.iters = 10;
  Tracker tracker(cfg, fix.rcfg);
  std::mt19937_64 rng(1234);
  for (int i = 0; i < 8; ++i) {
    const Posed init = scenes::perturbed(fix.gt, rng, 0.2 * M_PI / 180.0, 0.002);
    const TrackResult res = tracker.track(fix.map, *fix.frame, init);
    CHECK(!res.lost);
  }
  // A frame whose observation disagrees wildly: depth scaled up by half.
  Frame bad = *fix.frame;
  bad.depth *= 1.5;
  const TrackResult res = tracker.track(fix.map, bad, fix.gt);
  CHECK(res.lost);
}
