#include "sslam/render/renderer.hpp"

#include <algorithm>
#include <cmath>

#include "sslam/core/quat_grad.hpp"
#include "sslam/util/parallel.hpp"

namespace sslam {

namespace {

// Slack on the early squared-radius rejection; the exact alpha test decides
// borderline hits so both gather paths agree bit-for-bit.
constexpr double kQSlack = 1e-9;
// Relative floor on the running depth variance: sigma^2 >= (0.01 * d_m)^2.
constexpr double kSigmaFloorRel = 0.01;

struct HitRec {
  int idx;
  double d, u, v, gauss, alpha;
};

CamSurfel make_cam_surfel(const Surfeld& s, const Eigen::Matrix3d& rot_wc,
                          const Eigen::Vector3d& t_wc, double alpha_cutoff) {
  CamSurfel c;
  c.center = rot_wc * s.center + t_wc;
  c.rot = rot_wc * quat_to_rotation(s.orientation.coeffs());
  c.su = s.su;
  c.sv = s.sv;
  c.opacity = s.opacity;
  c.color = s.color;
  c.q_max = s.opacity > alpha_cutoff ? 2.0 * std::log(s.opacity / alpha_cutoff) + kQSlack : -1.0;
  return c;
}

inline bool try_intersect(const CamSurfel& s, int idx, const Eigen::Vector3d& ray,
                          const RenderConfig& cfg, HitRec& out) {
  if (s.q_max < 0) return false;
  const Eigen::Vector3d n = s.rot.col(2);
  const double denom = ray.dot(n);
  if (std::abs(denom) < cfg.parallel_eps) return false;
  const double thit = s.center.dot(n) / denom;
  if (thit <= 0) return false;
  const double d = cfg.enable_unbiased_depth ? thit * ray.z() : s.center.z();
  if (d <= 0) return false;
  const Eigen::Vector3d delta = thit * ray - s.center;
  const double u = delta.dot(s.rot.col(0)) / s.su;
  const double v = delta.dot(s.rot.col(1)) / s.sv;
  const double q = u * u + v * v;
  if (q > s.q_max) return false;
  const double gauss = std::exp(-0.5 * q);
  const double alpha = s.opacity * gauss;
  if (alpha < cfg.alpha_cutoff) return false;
  out = {idx, d, u, v, gauss, alpha};
  return true;
}

inline void sort_hits(std::vector<HitRec>& hits) {
  std::sort(hits.begin(), hits.end(), [](const HitRec& a, const HitRec& b) {
    return a.d < b.d || (a.d == b.d && a.idx < b.idx);
  });
}

int median_of_weights(const double* w, int n, double threshold) {
  if (n == 0) return -1;
  double cum = 0;
  for (int i = 0; i < n; ++i) {
    cum += w[i];
    if (cum > threshold) return i;
  }
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (w[i] > w[best]) best = i;
  }
  return best;
}

// Shared adjusted-depth recurrence: d_adj[i] for i <= m keeps d[i]; later
// hits blend toward d[m] with a factor driven by the running variance of the
// already-adjusted depths around it.
void adjust_depths(const double* d, const double* w, int n, int m, double sensitivity,
                   double* d_adj, double* beta) {
  for (int i = 0; i <= m; ++i) {
    d_adj[i] = d[i];
    beta[i] = 1.0;
  }
  const double dm = d[m];
  const double floor2 = (kSigmaFloorRel * dm) * (kSigmaFloorRel * dm);
  double var = 0;
  for (int j = 0; j <= m; ++j) {
    const double dj = d[j] - dm;
    var += w[j] * dj * dj;
  }
  for (int i = m + 1; i < n; ++i) {
    const double var_fl = std::max(var, floor2);
    const double dd = d[i] - dm;
    const double b = std::exp(-(dd * dd) / (sensitivity * var_fl));
    beta[i] = b;
    d_adj[i] = b * d[i] + (1.0 - b) * dm;
    const double dj = d_adj[i] - dm;
    var += w[i] * dj * dj;
  }
}

// Per-pixel scratch reused across a row chunk.
struct PixelScratch {
  std::vector<HitRec> hits;
  std::vector<double> w, d, d_adj, beta;
};

struct PixelOutputs {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  double depth = 0, accum = 0;
};

// Blends sorted hits; fills the trace pixel when requested.
template <typename ColorAt>
PixelOutputs blend_sorted(const std::vector<HitRec>& hits, const ColorAt& color_at,
                          const RenderConfig& cfg, PixelScratch& sc, PixelTrace* trace) {
  PixelOutputs out;
  const int n = static_cast<int>(hits.size());
  sc.w.clear();
  sc.d.clear();
  double transmittance = 1.0;
  int used = 0;
  for (int i = 0; i < n; ++i) {
    if (transmittance < cfg.transmittance_stop) break;
    const double w = hits[i].alpha * transmittance;
    sc.w.push_back(w);
    sc.d.push_back(hits[i].d);
    out.accum += w;
    out.color += w * color_at(hits[i].idx);
    transmittance *= 1.0 - hits[i].alpha;
    ++used;
  }
  const int m = median_of_weights(sc.w.data(), used, cfg.median_threshold);
  sc.d_adj.resize(static_cast<size_t>(used));
  sc.beta.resize(static_cast<size_t>(used));
  if (used > 0) {
    if (cfg.enable_depth_adjust) {
      adjust_depths(sc.d.data(), sc.w.data(), used, m, cfg.depth_adjust_sensitivity,
                    sc.d_adj.data(), sc.beta.data());
    } else {
      for (int i = 0; i < used; ++i) {
        sc.d_adj[i] = sc.d[i];
        sc.beta[i] = 1.0;
      }
    }
    double depth_sum = 0;
    for (int i = 0; i < used; ++i) depth_sum += sc.d_adj[i] * sc.w[i];
    out.depth = cfg.enable_depth_norm ? depth_sum / out.accum : depth_sum;
  }
  if (trace) {
    trace->median = m;
    trace->hits.resize(static_cast<size_t>(used));
    for (int i = 0; i < used; ++i) {
      trace->hits[i] = {hits[i].idx, hits[i].d,     hits[i].u,    hits[i].v,  hits[i].gauss,
                        hits[i].alpha, sc.w[i], sc.d_adj[i], sc.beta[i]};
    }
  }
  return out;
}

// Conservative tile bins: a surfel is binned into every tile whose pixels
// could receive alpha at or above the cutoff. Built from the projected hull
// of the cube bounding the surfel's contributing sphere.
struct TileGrid {
  int tile = 16;
  int tx = 0, ty = 0;
  std::vector<std::vector<int>> bins;

  void build(const std::vector<CamSurfel>& cam, const Intrinsicsd& intr, int tile_size) {
    tile = std::max(tile_size, 1);
    tx = (intr.width + tile - 1) / tile;
    ty = (intr.height + tile - 1) / tile;
    bins.assign(static_cast<size_t>(tx) * ty, {});
    for (int i = 0; i < static_cast<int>(cam.size()); ++i) {
      const CamSurfel& s = cam[i];
      if (s.q_max < 0) continue;
      const double span = std::sqrt(s.q_max) * std::max(s.su, s.sv) + 1e-12;
      if (s.center.z() + span <= 0) continue;  // entirely behind the camera
      double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
      bool near_plane = false;
      for (int corner = 0; corner < 8; ++corner) {
        const Eigen::Vector3d p = s.center + Eigen::Vector3d((corner & 1) ? span : -span,
                                                             (corner & 2) ? span : -span,
                                                             (corner & 4) ? span : -span);
        if (p.z() < 1e-8) {
          near_plane = true;
          break;
        }
        const double u = intr.fx * p.x() / p.z() + intr.cx;
        const double v = intr.fy * p.y() / p.z() + intr.cy;
        umin = std::min(umin, u);
        umax = std::max(umax, u);
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
      }
      int x0 = 0, x1 = intr.width - 1, y0 = 0, y1 = intr.height - 1;
      if (!near_plane) {
        x0 = std::max(0, static_cast<int>(std::floor(umin - 1e-6)));
        x1 = std::min(intr.width - 1, static_cast<int>(std::ceil(umax + 1e-6)));
        y0 = std::max(0, static_cast<int>(std::floor(vmin - 1e-6)));
        y1 = std::min(intr.height - 1, static_cast<int>(std::ceil(vmax + 1e-6)));
        if (x0 > x1 || y0 > y1) continue;
      }
      for (int by = y0 / tile; by <= y1 / tile; ++by) {
        for (int bx = x0 / tile; bx <= x1 / tile; ++bx) {
          bins[static_cast<size_t>(by) * tx + bx].push_back(i);
        }
      }
    }
  }

  const std::vector<int>& at(int y, int x) const {
    return bins[static_cast<size_t>(y / tile) * tx + x / tile];
  }
};

}  // namespace

std::optional<Intersection> intersect(const Surfeld& cam_surfel, const Eigen::Vector3d& ray,
                                      const RenderConfig& cfg, int index) {
  const CamSurfel c = make_cam_surfel(cam_surfel, Eigen::Matrix3d::Identity(),
                                      Eigen::Vector3d::Zero(), cfg.alpha_cutoff);
  HitRec hit;
  if (!try_intersect(c, index, ray, cfg, hit)) return std::nullopt;
  return Intersection{hit.idx, hit.u, hit.v, hit.d, hit.gauss, hit.alpha};
}

PixelResult render_pixel(std::span<const Intersection> sorted,
                         std::span<const Eigen::Vector3d> colors, const RenderConfig& cfg) {
  std::vector<HitRec> hits;
  hits.reserve(sorted.size());
  for (const Intersection& it : sorted) {
    hits.push_back({it.surfel, it.d, it.u, it.v, it.gauss, it.alpha});
  }
  PixelScratch sc;
  const PixelOutputs out = blend_sorted(
      hits, [&](int idx) { return colors[static_cast<size_t>(idx)]; }, cfg, sc, nullptr);
  return {out.color, out.depth, out.accum};
}

std::optional<int> median_index(std::span<const double> weights, const RenderConfig& cfg) {
  const int m = median_of_weights(weights.data(), static_cast<int>(weights.size()),
                                  cfg.median_threshold);
  if (m < 0) return std::nullopt;
  return m;
}

std::vector<double> depth_adjust(std::span<const double> depths,
                                 std::span<const double> weights, int median,
                                 const RenderConfig& cfg, std::vector<double>* betas) {
  const int n = static_cast<int>(depths.size());
  std::vector<double> d_adj(static_cast<size_t>(n));
  std::vector<double> beta(static_cast<size_t>(n));
  if (n > 0) {
    adjust_depths(depths.data(), weights.data(), n, median, cfg.depth_adjust_sensitivity,
                  d_adj.data(), beta.data());
  }
  if (betas) *betas = std::move(beta);
  return d_adj;
}

RenderOutput render(const SurfelMapd& map, const Posed& camera_pose, const Intrinsicsd& intr,
                    const RenderConfig& cfg, RenderTrace* trace) {
  return render_from_camera(map, inverse(camera_pose), intr, cfg, trace);
}

RenderOutput render_from_camera(const SurfelMapd& map, const Posed& world_to_cam,
                                const Intrinsicsd& intr, const RenderConfig& cfg,
                                RenderTrace* trace) {
  const int height = intr.height, width = intr.width;
  const int n = map.size();
  RenderOutput out;
  out.color.resize(height, width);
  out.depth.setZero(height, width);
  out.accum.setZero(height, width);

  std::vector<CamSurfel> cam(static_cast<size_t>(n));
  const Eigen::Matrix3d rot_wc = quat_to_rotation(world_to_cam.q.coeffs());
  for (int i = 0; i < n; ++i) {
    cam[static_cast<size_t>(i)] =
        make_cam_surfel(map.surfels[static_cast<size_t>(i)], rot_wc, world_to_cam.t,
                        cfg.alpha_cutoff);
  }

  TileGrid grid;
  const bool tiled = cfg.use_tiles && n > 0;
  if (tiled) grid.build(cam, intr, cfg.tile_size);

  if (trace) {
    trace->pixels.assign(static_cast<size_t>(height) * width, {});
    trace->world_to_cam = world_to_cam;
    trace->intr = intr;
  }

  parallel_chunks(height, [&](int y0, int y1) {
    PixelScratch sc;
    std::vector<int> all;
    if (!tiled) {
      all.resize(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
    }
    for (int y = y0; y < y1; ++y) {
      for (int x = 0; x < width; ++x) {
        const Eigen::Vector3d ray =
            Eigen::Vector3d((x - intr.cx) / intr.fx, (y - intr.cy) / intr.fy, 1.0).normalized();
        const std::vector<int>& candidates = tiled ? grid.at(y, x) : all;
        sc.hits.clear();
        HitRec hit;
        for (const int idx : candidates) {
          if (try_intersect(cam[static_cast<size_t>(idx)], idx, ray, cfg, hit)) {
            sc.hits.push_back(hit);
          }
        }
        sort_hits(sc.hits);
        PixelTrace* px_trace =
            trace ? &trace->pixels[static_cast<size_t>(y) * width + x] : nullptr;
        const PixelOutputs px = blend_sorted(
            sc.hits, [&](int idx) -> const Eigen::Vector3d& {
              return cam[static_cast<size_t>(idx)].color;
            },
            cfg, sc, px_trace);
        out.color.set(y, x, px.color);
        out.depth(y, x) = px.depth;
        out.accum(y, x) = px.accum;
      }
    }
  });

  if (trace) trace->cam = std::move(cam);
  return out;
}

namespace {

// Per-hit gradient contribution in camera-frame quantities; scattered into
// the per-surfel accumulators in row-major pixel order so the result is
// bit-identical to a sequential pass regardless of the worker count.
struct HitContrib {
  int idx;
  Eigen::Vector3d g_center;
  Eigen::Matrix3d g_rot;
  double g_su, g_sv, g_opacity;
  Eigen::Vector3d g_color;
};

struct BackwardAccum {
  std::vector<Eigen::Vector3d> g_center;
  std::vector<Eigen::Matrix3d> g_rot;
  Eigen::ArrayXd g_su, g_sv, g_opacity;
  std::vector<Eigen::Vector3d> g_color;

  explicit BackwardAccum(int n)
      : g_center(static_cast<size_t>(n), Eigen::Vector3d::Zero()),
        g_rot(static_cast<size_t>(n), Eigen::Matrix3d::Zero()),
        g_color(static_cast<size_t>(n), Eigen::Vector3d::Zero()) {
    g_su.setZero(n);
    g_sv.setZero(n);
    g_opacity.setZero(n);
  }

  void apply(const HitContrib& c) {
    const size_t i = static_cast<size_t>(c.idx);
    g_center[i] += c.g_center;
    g_rot[i] += c.g_rot;
    g_su[c.idx] += c.g_su;
    g_sv[c.idx] += c.g_sv;
    g_opacity[c.idx] += c.g_opacity;
    g_color[i] += c.g_color;
  }
};

struct BackwardScratch {
  std::vector<double> g_w, g_dadj, g_d;
};

template <typename Sink>
void pixel_backward(const PixelTrace& px, const std::vector<CamSurfel>& cam,
                    const Eigen::Vector3d& ray, const RenderConfig& cfg,
                    const Eigen::Vector3d& g_color_px, double g_depth_px, double g_accum_px,
                    const PixelHitGrads* extras, BackwardScratch& sc, const Sink& sink) {
  const int used = static_cast<int>(px.hits.size());
  if (used == 0) return;
  const int m = px.median;

  double accum = 0, depth_sum = 0;
  for (const BlendedHit& h : px.hits) {
    accum += h.w;
    depth_sum += h.d_adj * h.w;
  }

  double g_sum, g_accum_total;
  if (cfg.enable_depth_norm && accum > 0) {
    g_sum = g_depth_px / accum;
    g_accum_total = g_accum_px - g_depth_px * depth_sum / (accum * accum);
  } else {
    g_sum = g_depth_px;
    g_accum_total = g_accum_px;
  }

  sc.g_w.assign(static_cast<size_t>(used), 0.0);
  sc.g_dadj.assign(static_cast<size_t>(used), 0.0);
  sc.g_d.assign(static_cast<size_t>(used), 0.0);
  for (int i = 0; i < used; ++i) {
    const BlendedHit& h = px.hits[i];
    sc.g_dadj[i] = g_sum * h.w + (extras ? extras->d_dadj[static_cast<size_t>(i)] : 0.0);
    sc.g_w[i] = g_sum * h.d_adj + g_accum_total +
                g_color_px.dot(cam[static_cast<size_t>(h.surfel)].color) +
                (extras ? extras->d_w[static_cast<size_t>(i)] : 0.0);
  }

  // Reverse of the adjusted-depth recurrence. Contributions of the variance
  // terms are handled with a running suffix sum so the pass stays linear in
  // the number of hits.
  double g_dm = extras ? extras->d_median_depth : 0.0;
  if (cfg.enable_depth_adjust && m >= 0) {
    const double dm = px.hits[m].d;
    const double floor2 = (kSigmaFloorRel * dm) * (kSigmaFloorRel * dm);
    const double sens = cfg.depth_adjust_sensitivity;

    // Replay the forward variance sequence.
    std::vector<double> var_fl(static_cast<size_t>(used), 0.0);
    std::vector<char> floored(static_cast<size_t>(used), 0);
    {
      double var = 0;
      for (int j = 0; j <= m; ++j) {
        const double dj = px.hits[j].d - dm;
        var += px.hits[j].w * dj * dj;
      }
      for (int i = m + 1; i < used; ++i) {
        floored[i] = var < floor2 || var == floor2;
        var_fl[i] = std::max(var, floor2);
        const double dj = px.hits[i].d_adj - dm;
        var += px.hits[i].w * dj * dj;
      }
    }

    double g_var_suffix = 0;
    for (int i = used - 1; i > m; --i) {
      const BlendedHit& h = px.hits[i];
      // Variance terms of later hits that reference this hit's (w, d_adj).
      const double ddi = h.d_adj - dm;
      sc.g_dadj[i] += 2.0 * h.w * ddi * g_var_suffix;
      sc.g_w[i] += ddi * ddi * g_var_suffix;
      g_dm -= 2.0 * h.w * ddi * g_var_suffix;

      const double gi = sc.g_dadj[i];
      const double dd = h.d - dm;
      const double g_beta = gi * dd;
      sc.g_d[i] += gi * h.beta;
      g_dm += gi * (1.0 - h.beta);

      const double g_q = g_beta * h.beta * (-1.0 / (sens * var_fl[i]));
      const double g_var_fl = g_beta * h.beta * dd * dd / (sens * var_fl[i] * var_fl[i]);
      sc.g_d[i] += g_q * 2.0 * dd;
      g_dm -= g_q * 2.0 * dd;
      if (floored[i]) {
        g_dm += g_var_fl * 2.0 * kSigmaFloorRel * kSigmaFloorRel * dm;
      } else {
        g_var_suffix += g_var_fl;
      }
    }
    for (int j = 0; j <= m; ++j) {
      const BlendedHit& h = px.hits[j];
      const double dj = h.d - dm;
      sc.g_w[j] += dj * dj * g_var_suffix;
      sc.g_d[j] += 2.0 * h.w * dj * g_var_suffix;
      g_dm -= 2.0 * h.w * dj * g_var_suffix;
    }
    for (int i = 0; i <= m; ++i) sc.g_d[i] += sc.g_dadj[i];
    sc.g_d[m] += g_dm;
  } else {
    for (int i = 0; i < used; ++i) sc.g_d[i] += sc.g_dadj[i];
    if (m >= 0) sc.g_d[m] += g_dm;
  }

  // Weights back to alphas, then through the intersection geometry.
  double suffix = 0;
  for (int i = used - 1; i >= 0; --i) {
    const BlendedHit& h = px.hits[i];
    const CamSurfel& s = cam[static_cast<size_t>(h.surfel)];
    const double transmittance = h.w / h.alpha;
    const double g_alpha = sc.g_w[i] * transmittance - suffix / (1.0 - h.alpha);
    suffix += sc.g_w[i] * h.w;

    HitContrib c;
    c.idx = h.surfel;
    c.g_opacity = g_alpha * h.gauss;
    const double g_gauss = g_alpha * s.opacity;
    const double g_u = -g_gauss * h.gauss * h.u;
    const double g_v = -g_gauss * h.gauss * h.v;
    c.g_color = g_color_px * h.w;

    const Eigen::Vector3d e_u = s.rot.col(0);
    const Eigen::Vector3d e_v = s.rot.col(1);
    const Eigen::Vector3d n = s.rot.col(2);
    const double denom = ray.dot(n);
    const double thit = s.center.dot(n) / denom;
    const Eigen::Vector3d delta = thit * ray - s.center;

    const Eigen::Vector3d g_delta = (g_u / s.su) * e_u + (g_v / s.sv) * e_v;
    c.g_su = -g_u * h.u / s.su;
    c.g_sv = -g_v * h.v / s.sv;
    const double g_thit =
        g_delta.dot(ray) + (cfg.enable_unbiased_depth ? sc.g_d[i] * ray.z() : 0.0);
    Eigen::Vector3d g_center = -g_delta;
    if (!cfg.enable_unbiased_depth) g_center.z() += sc.g_d[i];
    g_center += (g_thit / denom) * n;
    const Eigen::Vector3d g_n = -(g_thit / denom) * delta;
    c.g_center = g_center;
    c.g_rot.col(0) = (g_u / s.su) * delta;
    c.g_rot.col(1) = (g_v / s.sv) * delta;
    c.g_rot.col(2) = g_n;
    sink(c);
  }
}

}  // namespace

RenderGradients render_backward(const SurfelMapd& map, const RenderTrace& trace,
                                const RenderConfig& cfg, const OutputGrads& upstream,
                                const std::vector<PixelHitGrads>* hit_grads) {
  const int n = map.size();
  const int height = trace.intr.height, width = trace.intr.width;
  RenderGradients grads;
  grads.setZero(n);
  BackwardAccum accum(n);

  const bool single = worker_threads() <= 1;
  std::vector<std::vector<HitContrib>> row_contribs;
  if (!single) row_contribs.resize(static_cast<size_t>(height));

  auto run_rows = [&](int y0, int y1, bool direct) {
    BackwardScratch sc;
    for (int y = y0; y < y1; ++y) {
      std::vector<HitContrib>* row = direct ? nullptr : &row_contribs[static_cast<size_t>(y)];
      for (int x = 0; x < width; ++x) {
        const size_t pix = static_cast<size_t>(y) * width + x;
        const PixelTrace& px = trace.pixels[pix];
        if (px.hits.empty()) continue;
        const Eigen::Vector3d ray =
            Eigen::Vector3d((x - trace.intr.cx) / trace.intr.fx,
                            (y - trace.intr.cy) / trace.intr.fy, 1.0)
                .normalized();
        const PixelHitGrads* extras = hit_grads ? &(*hit_grads)[pix] : nullptr;
        pixel_backward(px, trace.cam, ray, cfg, upstream.color.at(y, x), upstream.depth(y, x),
                       upstream.accum(y, x), extras, sc, [&](const HitContrib& c) {
                         if (direct) {
                           accum.apply(c);
                         } else {
                           row->push_back(c);
                         }
                       });
      }
    }
  };

  if (single) {
    run_rows(0, height, true);
  } else {
    parallel_chunks(height, [&](int y0, int y1) { run_rows(y0, y1, false); });
    for (int y = 0; y < height; ++y) {
      for (const HitContrib& c : row_contribs[static_cast<size_t>(y)]) accum.apply(c);
    }
  }

  // Chain the camera-frame accumulators to world-frame surfel parameters and
  // the world-to-camera transform.
  const Eigen::Matrix3d rot_wc = quat_to_rotation(trace.world_to_cam.q.coeffs());
  Eigen::Matrix3d g_rot_wc = Eigen::Matrix3d::Zero();
  Eigen::Vector3d g_t_wc = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    const size_t si = static_cast<size_t>(i);
    const Surfeld& s = map.surfels[si];
    g_t_wc += accum.g_center[si];
    g_rot_wc += accum.g_center[si] * s.center.transpose();
    const Eigen::Matrix3d rot_w = quat_to_rotation(s.orientation.coeffs());
    g_rot_wc += accum.g_rot[si] * rot_w.transpose();
    const Eigen::Matrix3d g_rot_world = rot_wc.transpose() * accum.g_rot[si];
    grads.d_center.row(i) = (rot_wc.transpose() * accum.g_center[si]).transpose();
    grads.d_orientation.row(i) =
        quat_rotation_backward(s.orientation.coeffs(), g_rot_world).transpose();
    grads.d_scale(i, 0) = accum.g_su[i];
    grads.d_scale(i, 1) = accum.g_sv[i];
    grads.d_opacity[i] = accum.g_opacity[i];
    grads.d_color.row(i) = accum.g_color[si].transpose();
  }
  grads.d_pose.head<4>() = quat_rotation_backward(trace.world_to_cam.q.coeffs(), g_rot_wc);
  grads.d_pose.tail<3>() = g_t_wc;
  return grads;
}

void dump_intersections_csv(const RenderTrace& trace, std::ostream& os) {
  os << "pixel_x,pixel_y,surfel,d,alpha,w\n";
  for (int y = 0; y < trace.intr.height; ++y) {
    for (int x = 0; x < trace.intr.width; ++x) {
      for (const BlendedHit& h : trace.at(y, x).hits) {
        os << x << ',' << y << ',' << h.surfel << ',' << h.d << ',' << h.alpha << ',' << h.w
           << '\n';
      }
    }
  }
}

}  // namespace sslam
