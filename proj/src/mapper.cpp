#include "sslam/map/mapper.hpp"

#include <cmath>
#include <stdexcept>

#include "sslam/core/quat_grad.hpp"

namespace sslam {

namespace {

inline double sign_of(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

Eigen::Matrix3d basis_from_normal(const Eigen::Vector3d& n) {
  const Eigen::Vector3d seed =
      std::abs(n.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  const Eigen::Vector3d e1 = seed.cross(n).normalized();
  const Eigen::Vector3d e2 = n.cross(e1);
  Eigen::Matrix3d rot;
  rot.col(0) = e1;
  rot.col(1) = e2;
  rot.col(2) = n;
  return rot;
}

}  // namespace

std::optional<Eigen::Vector3d> normal_from_depth(const Eigen::ArrayXXd& depth,
                                                 const Intrinsicsd& intr, int x, int y,
                                                 double max_rel_gap) {
  if (x < 1 || y < 1 || x + 1 >= intr.width || y + 1 >= intr.height) return std::nullopt;
  const double d0 = depth(y, x);
  if (!(d0 > 0)) return std::nullopt;
  const double dxm = depth(y, x - 1), dxp = depth(y, x + 1);
  const double dym = depth(y - 1, x), dyp = depth(y + 1, x);
  for (const double dn : {dxm, dxp, dym, dyp}) {
    if (!(dn > 0) || std::abs(dn - d0) > max_rel_gap * d0) return std::nullopt;
  }
  const auto pt = [&](int px, int py, double d) {
    return unproject<double>(intr, {static_cast<double>(px), static_cast<double>(py)}, d);
  };
  const Eigen::Vector3d tx = pt(x + 1, y, dxp) - pt(x - 1, y, dxm);
  const Eigen::Vector3d ty = pt(x, y + 1, dyp) - pt(x, y - 1, dym);
  Eigen::Vector3d n = tx.cross(ty);
  const double len = n.norm();
  if (len < 1e-15) return std::nullopt;
  n /= len;
  if (n.dot(pt(x, y, d0)) > 0) n = -n;  // orient toward the camera
  return n;
}

RegLoss reg_loss(const RenderTrace& trace, double grad_scale) {
  RegLoss out;
  out.hit_grads.resize(trace.pixels.size());
  long rays = 0;
  for (const PixelTrace& px : trace.pixels) {
    if (px.median >= 0) ++rays;
  }
  if (rays == 0) return out;
  const double inv_r = 1.0 / static_cast<double>(rays);
  const double gscale = grad_scale * inv_r;
  double total = 0;
  for (size_t p = 0; p < trace.pixels.size(); ++p) {
    const PixelTrace& px = trace.pixels[p];
    if (px.median < 0) continue;
    const double dm = px.hits[static_cast<size_t>(px.median)].d;
    PixelHitGrads& hg = out.hit_grads[p];
    hg.d_w.assign(px.hits.size(), 0.0);
    hg.d_dadj.assign(px.hits.size(), 0.0);
    for (size_t i = 0; i < px.hits.size(); ++i) {
      const BlendedHit& h = px.hits[i];
      const double dev = h.d_adj - dm;
      total += h.w * dev * dev;
      hg.d_w[i] = gscale * dev * dev;
      hg.d_dadj[i] = gscale * 2.0 * h.w * dev;
      hg.d_median_depth -= gscale * 2.0 * h.w * dev;
    }
  }
  out.value = total * inv_r;
  return out;
}

Mapper::Mapper(const MapConfig& cfg, const RenderConfig& render_cfg, std::uint64_t seed)
    : cfg_(cfg),
      render_cfg_(render_cfg),
      rng_(seed),
      adam_center_(cfg.adam_beta1, cfg.adam_beta2),
      adam_orient_(cfg.adam_beta1, cfg.adam_beta2),
      adam_scale_(cfg.adam_beta1, cfg.adam_beta2),
      adam_opacity_(cfg.adam_beta1, cfg.adam_beta2),
      adam_color_(cfg.adam_beta1, cfg.adam_beta2) {}

void Mapper::reset() {
  adam_center_.reset(0);
  adam_orient_.reset(0);
  adam_scale_.reset(0);
  adam_opacity_.reset(0);
  adam_color_.reset(0);
  exposure_adam_.clear();
  bound_size_ = -1;
  bound_generation_ = 0;
}

void Mapper::sync(const SurfelMapd& map) {
  if (bound_size_ < 0) {
    adam_center_.reset(3 * map.size());
    adam_orient_.reset(4 * map.size());
    adam_scale_.reset(2 * map.size());
    adam_opacity_.reset(map.size());
    adam_color_.reset(3 * map.size());
    mark(map);
    return;
  }
  if (bound_size_ != map.size() || bound_generation_ != map.generation) {
    throw std::logic_error("Mapper: map changed structurally outside the mapper");
  }
}

void Mapper::mark(const SurfelMapd& map) {
  bound_size_ = map.size();
  bound_generation_ = map.generation;
}

int Mapper::attach_surfels(const Frame& frame, const Posed& pose, const RenderOutput& rendered,
                           SurfelMapd& map) {
  sync(map);
  const Intrinsicsd& intr = frame.intrinsics;
  const double mean_focal = intr.mean_focal();
  int added = 0;
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const double accum = rendered.accum(y, x);
      const double d_obs = frame.depth(y, x);
      double d;
      bool from_sensor;
      if (d_obs > 0 && accum < cfg_.attach_accum) {
        d = d_obs;
        from_sensor = true;
      } else if (!(d_obs > 0) && accum > cfg_.edge_low && accum < cfg_.edge_high) {
        // Partially covered depth hole: grow from the rendered depth.
        d = rendered.depth(y, x);
        from_sensor = false;
        if (!(d > 0)) continue;
      } else {
        continue;
      }

      const Eigen::Vector2d px(static_cast<double>(x), static_cast<double>(y));
      const Eigen::Vector3d p_cam = unproject<double>(intr, px, d);
      std::optional<Eigen::Vector3d> n_cam;
      if (from_sensor) {
        n_cam = normal_from_depth(frame.depth, intr, x, y, cfg_.normal_max_rel_gap);
      }
      if (!n_cam) n_cam = -pixel_ray<double>(intr, px);

      Surfeld s;
      s.center = pose.apply(p_cam);
      s.orientation = pose.q * Eigen::Quaterniond(basis_from_normal(*n_cam));
      s.orientation.normalize();
      s.su = s.sv = d / mean_focal;
      s.opacity = cfg_.init_opacity;
      const Eigen::Vector3d observed = frame.color.at(y, x);
      s.color = (observed - Eigen::Vector3d::Constant(frame.exposure.bias)) /
                std::max(frame.exposure.gain, 1e-6);
      s.clamp();
      map.surfels.push_back(s);
      ++added;
    }
  }
  if (added > 0) {
    ++map.generation;
    adam_center_.append(3 * added);
    adam_orient_.append(4 * added);
    adam_scale_.append(2 * added);
    adam_opacity_.append(added);
    adam_color_.append(3 * added);
  }
  mark(map);
  return added;
}

void Mapper::append(SurfelMapd& map, std::span<const Surfeld> extra) {
  sync(map);
  if (extra.empty()) return;
  map.surfels.insert(map.surfels.end(), extra.begin(), extra.end());
  ++map.generation;
  const int added = static_cast<int>(extra.size());
  adam_center_.append(3 * added);
  adam_orient_.append(4 * added);
  adam_scale_.append(2 * added);
  adam_opacity_.append(added);
  adam_color_.append(3 * added);
  mark(map);
}

void Mapper::apply_surfel_step(SurfelMapd& map, const RenderGradients& grads) {
  sync(map);
  const int n = map.size();
  if (n == 0) return;

  if (cfg_.lr_center != 0.0) {
    Eigen::ArrayXd params(3 * n), grad(3 * n);
    for (int i = 0; i < n; ++i) {
      params.segment<3>(3 * i) = map.surfels[static_cast<size_t>(i)].center.array();
      grad.segment<3>(3 * i) = grads.d_center.row(i).transpose().array();
    }
    adam_center_.step(params, grad, cfg_.lr_center);
    for (int i = 0; i < n; ++i) {
      map.surfels[static_cast<size_t>(i)].center = params.segment<3>(3 * i).matrix();
    }
  }
  if (cfg_.lr_orientation != 0.0) {
    Eigen::ArrayXd params(4 * n), grad(4 * n);
    for (int i = 0; i < n; ++i) {
      params.segment<4>(4 * i) = map.surfels[static_cast<size_t>(i)].orientation.coeffs().array();
      grad.segment<4>(4 * i) = grads.d_orientation.row(i).transpose().array();
    }
    adam_orient_.step(params, grad, cfg_.lr_orientation);
    for (int i = 0; i < n; ++i) {
      Eigen::Quaterniond q;
      q.coeffs() = params.segment<4>(4 * i).matrix();
      q.normalize();
      map.surfels[static_cast<size_t>(i)].orientation = q;
    }
  }
  if (cfg_.lr_scale != 0.0) {
    // Optimized in log-space so positivity needs no constraint.
    Eigen::ArrayXd params(2 * n), grad(2 * n);
    for (int i = 0; i < n; ++i) {
      const Surfeld& s = map.surfels[static_cast<size_t>(i)];
      params[2 * i] = std::log(s.su);
      params[2 * i + 1] = std::log(s.sv);
      grad[2 * i] = grads.d_scale(i, 0) * s.su;
      grad[2 * i + 1] = grads.d_scale(i, 1) * s.sv;
    }
    adam_scale_.step(params, grad, cfg_.lr_scale);
    for (int i = 0; i < n; ++i) {
      Surfeld& s = map.surfels[static_cast<size_t>(i)];
      s.su = std::max(std::exp(params[2 * i]), kMinScale);
      s.sv = std::max(std::exp(params[2 * i + 1]), kMinScale);
    }
  }
  if (cfg_.lr_opacity != 0.0) {
    Eigen::ArrayXd params(n), grad(n);
    for (int i = 0; i < n; ++i) {
      params[i] = map.surfels[static_cast<size_t>(i)].opacity;
      grad[i] = grads.d_opacity[i];
    }
    adam_opacity_.step(params, grad, cfg_.lr_opacity);
    for (int i = 0; i < n; ++i) {
      map.surfels[static_cast<size_t>(i)].opacity =
          std::min(std::max(params[i], kMinOpacity), kMaxOpacity);
    }
  }
  if (cfg_.lr_color != 0.0) {
    Eigen::ArrayXd params(3 * n), grad(3 * n);
    for (int i = 0; i < n; ++i) {
      params.segment<3>(3 * i) = map.surfels[static_cast<size_t>(i)].color.array();
      grad.segment<3>(3 * i) = grads.d_color.row(i).transpose().array();
    }
    adam_color_.step(params, grad, cfg_.lr_color);
    for (int i = 0; i < n; ++i) {
      map.surfels[static_cast<size_t>(i)].color =
          params.segment<3>(3 * i).matrix().cwiseMax(0.0).cwiseMin(1.0);
    }
  }
}

void Mapper::step_exposure(Frame& frame, double g_gain, double g_bias) {
  if (cfg_.lr_exposure == 0.0) return;
  auto [it, inserted] = exposure_adam_.try_emplace(frame.id, cfg_.adam_beta1, cfg_.adam_beta2);
  if (inserted) it->second.reset(2);
  Eigen::ArrayXd params(2), grad(2);
  params << frame.exposure.gain, frame.exposure.bias;
  grad << g_gain, g_bias;
  it->second.step(params, grad, cfg_.lr_exposure);
  frame.exposure.gain = std::max(params[0], 1e-3);
  frame.exposure.bias = params[1];
}

MapStepResult Mapper::map_step(SurfelMapd& map, std::span<const MapFrame> frames) {
  sync(map);
  if (map.empty() || frames.empty()) {
    throw std::invalid_argument("map_step: needs a non-empty map and at least one frame");
  }
  std::uniform_int_distribution<size_t> pick(0, frames.size() - 1);
  const size_t chosen = pick(rng_);
  Frame& frame = *frames[chosen].frame;
  const Intrinsicsd& intr = frame.intrinsics;

  RenderTrace trace;
  const RenderOutput rendered =
      render_from_camera(map, inverse(frames[chosen].pose), intr, render_cfg_, &trace);

  const int height = intr.height, width = intr.width;
  long depth_count = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (frame.depth(y, x) > 0) ++depth_count;
    }
  }

  OutputGrads upstream;
  upstream.setZero(height, width);
  double loss = 0;
  const double inv_nd = depth_count > 0 ? 1.0 / static_cast<double>(depth_count) : 0.0;
  const double color_w = cfg_.lambda1 / (3.0 * static_cast<double>(height) * width);
  const double gain = frame.exposure.gain;
  double g_gain = 0, g_bias = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (frame.depth(y, x) > 0) {
        const double rd = rendered.depth(y, x) - frame.depth(y, x);
        loss += std::abs(rd) * inv_nd;
        upstream.depth(y, x) = sign_of(rd) * inv_nd;
      }
      const Eigen::Vector3d raw = rendered.color.at(y, x);
      const Eigen::Vector3d corrected =
          gain * raw + Eigen::Vector3d::Constant(frame.exposure.bias);
      const Eigen::Vector3d rc = corrected - frame.color.at(y, x);
      loss += color_w * (std::abs(rc.x()) + std::abs(rc.y()) + std::abs(rc.z()));
      const Eigen::Vector3d s(sign_of(rc.x()), sign_of(rc.y()), sign_of(rc.z()));
      upstream.color.set(y, x, color_w * gain * s);
      g_gain += color_w * s.dot(raw);
      g_bias += color_w * s.sum();
    }
  }

  const RegLoss reg = reg_loss(trace, cfg_.lambda2);
  loss += cfg_.lambda2 * reg.value;

  const RenderGradients grads =
      render_backward(map, trace, render_cfg_, upstream, &reg.hit_grads);
  apply_surfel_step(map, grads);
  step_exposure(frame, g_gain, g_bias);
  return {loss, static_cast<int>(chosen)};
}

int Mapper::prune(SurfelMapd& map) {
  sync(map);
  const int n = map.size();
  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (!(map.surfels[static_cast<size_t>(i)].opacity < cfg_.prune_opacity)) {
      keep.push_back(i);
    }
  }
  const int removed = n - static_cast<int>(keep.size());
  if (removed == 0) return 0;

  std::vector<Surfeld> kept;
  kept.reserve(keep.size());
  std::vector<Eigen::Index> k1, k2, k3, k4;
  for (const Eigen::Index i : keep) {
    kept.push_back(map.surfels[static_cast<size_t>(i)]);
    for (int c = 0; c < 3; ++c) k3.push_back(3 * i + c);
    for (int c = 0; c < 4; ++c) k4.push_back(4 * i + c);
    for (int c = 0; c < 2; ++c) k2.push_back(2 * i + c);
    k1.push_back(i);
  }
  map.surfels.swap(kept);
  ++map.generation;
  adam_center_.compact(k3);
  adam_orient_.compact(k4);
  adam_scale_.compact(k2);
  adam_opacity_.compact(k1);
  adam_color_.compact(k3);
  mark(map);
  return removed;
}

}  // namespace sslam
