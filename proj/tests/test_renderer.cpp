#include <doctest.h>

#include <random>

#include "sslam/render/renderer.hpp"
#include "support/oracles.hpp"

using namespace sslam;

namespace {

Surfeld cam_surfel(const Eigen::Vector3d& center, const Eigen::Vector3d& normal, double su,
                   double sv, double opacity, const Eigen::Vector3d& color) {
  Surfeld s;
  s.center = center;
  const Eigen::Vector3d n = normal.normalized();
  const Eigen::Vector3d seed =
      std::abs(n.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  Eigen::Matrix3d rot;
  rot.col(0) = seed.cross(n).normalized();
  rot.col(1) = n.cross(rot.col(0));
  rot.col(2) = n;
  s.orientation = Eigen::Quaterniond(rot).normalized();
  s.su = su;
  s.sv = sv;
  s.opacity = opacity;
  s.color = color;
  return s;
}

// Dense grid of camera-facing surfels covering a z = depth plane.
SurfelMapd plane_map(double depth, double extent, double spacing, double opacity) {
  SurfelMapd map;
  for (double y = -extent; y <= extent; y += spacing) {
    for (double x = -extent; x <= extent; x += spacing) {
      const bool checker = (static_cast<long>(std::floor(x / 0.2)) +
                            static_cast<long>(std::floor(y / 0.2))) % 2 == 0;
      map.add(cam_surfel({x, y, depth}, {0, 0, -1}, spacing, spacing, opacity,
                         checker ? Eigen::Vector3d(0.8, 0.3, 0.2)
                                 : Eigen::Vector3d(0.2, 0.5, 0.8)));
    }
  }
  return map;
}

Intrinsicsd small_intr(int w = 32, int h = 32) {
  Intrinsicsd intr;
  intr.width = w;
  intr.height = h;
  intr.fx = intr.fy = 0.8 * w;
  intr.cx = w / 2.0 - 0.5;
  intr.cy = h / 2.0 - 0.5;
  return intr;
}

}  // namespace

TEST_CASE("intersect: frontoparallel center hit") {
  const RenderConfig cfg;
  const Surfeld s = cam_surfel({0, 0, 2}, {0, 0, -1}, 0.1, 0.1, 0.8, {1, 0, 0});
  const auto hit = intersect(s, {0, 0, 1}, cfg);
  REQUIRE(hit.has_value());
  CHECK(hit->d == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(hit->u) < 1e-12);
  CHECK(std::abs(hit->v) < 1e-12);
  CHECK(hit->gauss == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(hit->alpha == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("intersect: tilted plane against the closed-form oracle") {
  const RenderConfig cfg;
  // Plane through (0,0,2) tilted 45 degrees about x.
  const Eigen::Vector3d normal(0, -std::sin(M_PI / 4), -std::cos(M_PI / 4));
  const Surfeld s = cam_surfel({0, 0, 2}, normal, 0.5, 0.5, 0.9, {1, 1, 1});
  const auto hit = intersect(s, {0, 0, 1}, cfg);
  REQUIRE(hit.has_value());
  CHECK(hit->d == doctest::Approx(2.0).epsilon(1e-12));

  oracle::Hit ref;
  REQUIRE(oracle::intersect_local(s, 0, {0, 0, 1}, cfg, ref));
  CHECK(hit->d == doctest::Approx(ref.d).epsilon(1e-12));
  CHECK(hit->u == doctest::Approx(ref.u).epsilon(1e-9));
  CHECK(hit->v == doctest::Approx(ref.v).epsilon(1e-9));
  CHECK(hit->gauss == doctest::Approx(ref.gauss).epsilon(1e-12));
}

TEST_CASE("intersect: edge-on surfel misses") {
  const RenderConfig cfg;
  const Surfeld s = cam_surfel({0, 0, 2}, {0, 1, 0}, 0.1, 0.1, 0.8, {1, 0, 0});
  CHECK(!intersect(s, {0, 0, 1}, cfg).has_value());
}

TEST_CASE("intersect: behind-camera and low-alpha misses") {
  const RenderConfig cfg;
  CHECK(!intersect(cam_surfel({0, 0, -2}, {0, 0, -1}, 0.1, 0.1, 0.8, {1, 0, 0}), {0, 0, 1},
                   cfg)
             .has_value());
  // Opacity below the cutoff can never contribute.
  CHECK(!intersect(cam_surfel({0, 0, 2}, {0, 0, -1}, 0.1, 0.1, 1e-4, {1, 0, 0}), {0, 0, 1},
                   cfg)
             .has_value());
}

TEST_CASE("render_pixel: single hit normalizes its own depth exactly") {
  const RenderConfig cfg;
  const Intersection one{0, 0, 0, 2.0, 1.0, 0.8};
  const Eigen::Vector3d colors[] = {{1, 0, 0}};
  const PixelResult px = render_pixel({&one, 1}, {colors, 1}, cfg);
  CHECK(px.color.x() == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(px.accum == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(px.depth == 2.0);
}

TEST_CASE("render_pixel: two equal alphas") {
  const RenderConfig cfg;
  const Intersection hits[] = {{0, 0, 0, 1.0, 1.0, 0.5}, {1, 0, 0, 2.0, 1.0, 0.5}};
  const Eigen::Vector3d colors[] = {{1, 0, 0}, {0, 1, 0}};
  const PixelResult px = render_pixel({hits, 2}, {colors, 2}, cfg);
  CHECK(px.accum == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(px.color.x() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(px.color.y() == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("render_pixel: random hit lists match the literal-formula oracle") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0, 1);
  const RenderConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(u(rng) * 10);
    std::vector<Intersection> hits;
    std::vector<oracle::Hit> ref_hits;
    std::vector<Eigen::Vector3d> colors;
    for (int i = 0; i < n; ++i) {
      Intersection it;
      it.surfel = i;
      it.d = 0.5 + 3.0 * u(rng);
      it.gauss = 0.05 + 0.95 * u(rng);
      it.alpha = std::min(0.999 * it.gauss, 0.05 + 0.94 * u(rng));
      hits.push_back(it);
      colors.emplace_back(u(rng), u(rng), u(rng));
      ref_hits.push_back({i, it.d, 0, 0, it.gauss, it.alpha, colors.back()});
    }
    std::sort(hits.begin(), hits.end(), [](const Intersection& a, const Intersection& b) {
      return a.d < b.d || (a.d == b.d && a.surfel < b.surfel);
    });
    const PixelResult px = render_pixel(hits, colors, cfg);
    const oracle::PixelRef ref = oracle::blend_reference(ref_hits, cfg);
    CHECK(px.accum == doctest::Approx(ref.accum).epsilon(1e-12));
    CHECK(px.depth == doctest::Approx(ref.depth).epsilon(1e-12));
    CHECK((px.color - ref.color).norm() < 1e-12);
  }
}

TEST_CASE("median_index") {
  const RenderConfig cfg;
  SUBCASE("crossing the threshold") {
    const double w[] = {0.3, 0.3, 0.4};
    CHECK(median_index({w, 3}, cfg).value() == 1);
  }
  SUBCASE("single dominant weight") {
    const double w[] = {0.6};
    CHECK(median_index({w, 1}, cfg).value() == 0);
  }
  SUBCASE("fallback to the first largest weight") {
    const double w[] = {0.2, 0.2};
    CHECK(median_index({w, 2}, cfg).value() == 0);
    const double w2[] = {0.1, 0.15, 0.15};
    CHECK(median_index({w2, 3}, cfg).value() == 1);
  }
  SUBCASE("empty input has no median") {
    CHECK(!median_index({}, cfg).has_value());
  }
}

TEST_CASE("depth_adjust") {
  RenderConfig cfg;
  SUBCASE("all depths at the median stay put") {
    const double d[] = {2.0, 2.0, 2.0};
    const double w[] = {0.3, 0.3, 0.3};
    std::vector<double> betas;
    const auto adj = depth_adjust({d, 3}, {w, 3}, 0, cfg, &betas);
    for (int i = 0; i < 3; ++i) {
      CHECK(adj[static_cast<size_t>(i)] == 2.0);
      CHECK(betas[static_cast<size_t>(i)] == 1.0);
    }
  }
  SUBCASE("hits before the median keep their depth") {
    const double d[] = {1.0, 1.5, 2.0, 4.0};
    const double w[] = {0.2, 0.2, 0.3, 0.2};
    const auto adj = depth_adjust({d, 4}, {w, 4}, 2, cfg);
    CHECK(adj[0] == 1.0);
    CHECK(adj[1] == 1.5);
    CHECK(adj[2] == 2.0);
    CHECK(adj[3] < 4.0);  // pulled toward the median
    CHECK(adj[3] > 2.0);
  }
  SUBCASE("a gap equal to sigma gives beta = exp(-1/B)") {
    // One pre-median hit at distance s from the median with weight 1 makes
    // the running variance s^2; a post-median hit at the same distance then
    // gets beta = exp(-1/B).
    cfg.depth_adjust_sensitivity = 4.0;
    const double s = 0.5;
    const double d[] = {2.0 - s, 2.0, 2.0 + s};
    const double w[] = {1.0, 0.6, 0.2};
    std::vector<double> betas;
    const auto adj = depth_adjust({d, 3}, {w, 3}, 1, cfg, &betas);
    CHECK(betas[2] == doctest::Approx(std::exp(-0.25)).epsilon(1e-12));
    CHECK(adj[2] == doctest::Approx(betas[2] * (2.0 + s) + (1 - betas[2]) * 2.0));
  }
}

TEST_CASE("render: empty map renders background") {
  const RenderConfig cfg;
  const SurfelMapd map;
  const RenderOutput out = render(map, Posed::Identity(), small_intr(), cfg);
  CHECK(out.accum.maxCoeff() == 0.0);
  CHECK(out.depth.maxCoeff() == 0.0);
  CHECK(out.color.r.maxCoeff() == 0.0);
}

TEST_CASE("render: opaque frontoparallel plane has exact depth") {
  const RenderConfig cfg;
  const SurfelMapd map = plane_map(2.0, 1.5, 0.05, 0.95);
  const Intrinsicsd intr = small_intr(48, 48);
  const RenderOutput out = render(map, Posed::Identity(), intr, cfg);
  int checked = 0;
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      if (out.accum(y, x) > 0.99) {
        CHECK(std::abs(out.depth(y, x) - 2.0) < 1e-6);
        ++checked;
      }
    }
  }
  CHECK(checked > intr.width * intr.height / 2);
}

TEST_CASE("render: deterministic across repeated calls") {
  const RenderConfig cfg;
  const oracle::Scene scene = oracle::random_scene(99);
  const RenderOutput a = render(scene.map, scene.camera, scene.intr, cfg);
  const RenderOutput b = render(scene.map, scene.camera, scene.intr, cfg);
  CHECK((a.depth == b.depth).all());
  CHECK((a.accum == b.accum).all());
  CHECK((a.color.r == b.color.r).all());
  CHECK((a.color.g == b.color.g).all());
  CHECK((a.color.b == b.color.b).all());
}

TEST_CASE("render: tile binning matches the brute-force path") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    oracle::SceneOptions opt;
    opt.surfels = 40;
    opt.max_scale = 0.6;
    const oracle::Scene scene = oracle::random_scene(1000 + seed, opt);
    RenderConfig tiled;
    tiled.use_tiles = true;
    tiled.tile_size = 8;
    RenderConfig brute;
    brute.use_tiles = false;
    const RenderOutput a = render(scene.map, scene.camera, scene.intr, tiled);
    const RenderOutput b = render(scene.map, scene.camera, scene.intr, brute);
    CHECK((a.depth - b.depth).abs().maxCoeff() < 1e-9);
    CHECK((a.accum - b.accum).abs().maxCoeff() < 1e-9);
    CHECK((a.color.r - b.color.r).abs().maxCoeff() < 1e-9);
    CHECK((a.color.g - b.color.g).abs().maxCoeff() < 1e-9);
    CHECK((a.color.b - b.color.b).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("render: random scenes agree with the reference renderer") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const oracle::Scene scene = oracle::random_scene(2000 + seed);
    const RenderConfig cfg;
    const RenderOutput fast = render(scene.map, scene.camera, scene.intr, cfg);
    const RenderOutput ref =
        oracle::render_reference(scene.map, scene.camera, scene.intr, cfg);
    CHECK((fast.depth - ref.depth).abs().maxCoeff() < 1e-9);
    CHECK((fast.accum - ref.accum).abs().maxCoeff() < 1e-9);
    CHECK((fast.color.r - ref.color.r).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("render: weight bounds and accumulation cap") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    oracle::SceneOptions opt;
    opt.surfels = 20;
    opt.max_scale = 0.5;
    const oracle::Scene scene = oracle::random_scene(3000 + seed, opt);
    RenderConfig cfg;
    RenderTrace trace;
    const RenderOutput out =
        render_from_camera(scene.map, inverse(scene.camera), scene.intr, cfg, &trace);
    for (const PixelTrace& px : trace.pixels) {
      double sum = 0;
      for (const BlendedHit& h : px.hits) {
        CHECK(h.w >= 0.0);
        CHECK(h.w <= 1.0);
        sum += h.w;
      }
      CHECK(sum <= 1.0 + 1e-9);
    }
    CHECK(out.accum.maxCoeff() <= 1.0 + 1e-9);
  }
}

TEST_CASE("render: adjusted depths are convex combinations") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    oracle::SceneOptions opt;
    opt.surfels = 15;
    opt.max_scale = 0.5;
    const oracle::Scene scene = oracle::random_scene(4000 + seed, opt);
    RenderConfig cfg;
    RenderTrace trace;
    const RenderOutput out =
        render_from_camera(scene.map, inverse(scene.camera), scene.intr, cfg, &trace);
    for (int y = 0; y < scene.intr.height; ++y) {
      for (int x = 0; x < scene.intr.width; ++x) {
        const PixelTrace& px = trace.at(y, x);
        if (px.hits.empty()) continue;
        double dmin = px.hits.front().d, dmax = px.hits.front().d;
        for (const BlendedHit& h : px.hits) {
          dmin = std::min(dmin, h.d);
          dmax = std::max(dmax, h.d);
        }
        const double dm = px.hits[static_cast<size_t>(px.median)].d;
        for (const BlendedHit& h : px.hits) {
          CHECK(h.d_adj >= dmin - 1e-12);
          CHECK(h.d_adj <= std::max(h.d, dm) + 1e-12);
        }
        CHECK(out.depth(y, x) >= dmin - 1e-9);
        CHECK(out.depth(y, x) <= dmax + 1e-9);
      }
    }
  }
}

TEST_CASE("render: single-depth pixels normalize exactly") {
  // Several overlapping surfels on the same plane: every hit shares depth d,
  // so the normalized blend must return exactly d no matter the coverage.
  const RenderConfig cfg;
  SurfelMapd map;
  map.add(cam_surfel({0, 0, 2}, {0, 0, -1}, 0.3, 0.3, 0.5, {1, 0, 0}));
  map.add(cam_surfel({0.05, 0, 2}, {0, 0, -1}, 0.3, 0.3, 0.4, {0, 1, 0}));
  map.add(cam_surfel({0, 0.05, 2}, {0, 0, -1}, 0.3, 0.3, 0.3, {0, 0, 1}));
  const Intrinsicsd intr = small_intr();
  const RenderOutput out = render(map, Posed::Identity(), intr, cfg);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      if (out.accum(y, x) > 0) {
        CHECK(std::abs(out.depth(y, x) - 2.0) < 1e-9);
      }
    }
  }
}

TEST_CASE("render: raising the front opacity never raises weights behind it") {
  const RenderConfig cfg;
  SurfelMapd map;
  map.add(cam_surfel({0, 0, 1.5}, {0, 0, -1}, 0.4, 0.4, 0.4, {1, 0, 0}));
  map.add(cam_surfel({0, 0, 2.5}, {0, 0, -1}, 0.6, 0.6, 0.6, {0, 1, 0}));
  const Intrinsicsd intr = small_intr();

  RenderTrace before, after;
  render(map, Posed::Identity(), intr, cfg, &before);
  map.surfels[0].opacity = 0.8;
  ++map.generation;
  render(map, Posed::Identity(), intr, cfg, &after);

  for (size_t p = 0; p < before.pixels.size(); ++p) {
    const PixelTrace& a = before.pixels[p];
    const PixelTrace& b = after.pixels[p];
    if (a.hits.size() == 2 && b.hits.size() == 2 && a.hits[0].surfel == 0) {
      CHECK(b.hits[1].w <= a.hits[1].w + 1e-15);
    }
  }
}

TEST_CASE("render: perfect plane map is view consistent") {
  // Surfels lying exactly on a plane reproduce the analytic ray/plane depth
  // from any viewpoint.
  const SurfelMapd map = plane_map(2.0, 2.0, 0.05, 0.95);
  const Intrinsicsd intr = small_intr(40, 40);
  const RenderConfig cfg;
  std::mt19937_64 rng(57);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int view = 0; view < 6; ++view) {
    Posed cam;
    cam.t = Eigen::Vector3d(0.4 * u(rng), 0.4 * u(rng), 0.3 * u(rng));
    cam.q = Eigen::Quaterniond(
                Eigen::AngleAxisd(0.25 * u(rng),
                                  Eigen::Vector3d(u(rng), u(rng), 1).normalized()))
                .normalized();
    const RenderOutput out = render(map, cam, intr, cfg);
    const Posed w2c = inverse(cam);
    // Analytic depth of the z = 2 plane along each pixel ray.
    const Eigen::Vector3d n_cam = w2c.q * Eigen::Vector3d(0, 0, 1);
    const Eigen::Vector3d p0_cam = w2c.apply(Eigen::Vector3d(0, 0, 2));
    for (int y = 0; y < intr.height; ++y) {
      for (int x = 0; x < intr.width; ++x) {
        if (out.accum(y, x) < 0.99) continue;
        const Eigen::Vector3d ray =
            pixel_ray<double>(intr, {static_cast<double>(x), static_cast<double>(y)});
        const double t_hit = p0_cam.dot(n_cam) / ray.dot(n_cam);
        const double analytic = t_hit * ray.z();
        CHECK(std::abs(out.depth(y, x) - analytic) < 1e-4);
      }
    }
  }
}

TEST_CASE("render: intersection dump lists every blended hit") {
  const oracle::Scene scene = oracle::random_scene(71);
  const RenderConfig cfg;
  RenderTrace trace;
  render_from_camera(scene.map, inverse(scene.camera), scene.intr, cfg, &trace);
  std::ostringstream os;
  dump_intersections_csv(trace, os);
  size_t hits = 0;
  for (const PixelTrace& px : trace.pixels) hits += px.hits.size();
  size_t lines = 0;
  std::string line;
  std::istringstream is(os.str());
  while (std::getline(is, line)) ++lines;
  CHECK(lines == hits + 1);  // header plus one line per hit
}
