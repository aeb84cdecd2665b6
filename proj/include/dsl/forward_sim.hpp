// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef DSL_FORWARD_SIM_HPP
#define DSL_FORWARD_SIM_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "dsl/correspondence.hpp"
#include "dsl/image.hpp"
#include "dsl/parallel.hpp"
#include "dsl/patterns.hpp"
#include "dsl/rng.hpp"
#include "dsl/scene.hpp"
#include "dsl/spectral.hpp"

namespace dsl {

/// A batch of captures under one pattern set, plus capture metadata.
struct CaptureStack {
  PatternSet patterns;
  int width = 0, height = 0;  // camera resolution
  std::vector<Image> frames;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  double exposure = 1.0;
  double intensity = 1.0;
  std::vector<std::uint8_t> saturated;  // per pixel, set by merge_hdr

  void validate() const {
    detail::require(int(frames.size()) == patterns.size(),
                    "image count must equal pattern count");
    for (const auto& f : frames)
      detail::require(f.width == width && f.height == height,
                      "frame resolution mismatch");
  }
};

struct RenderOptions {
  double exposure = 1.0;
  double intensity = 1.0;
  double saturation = -1.0;  // < 0: no clipping
};

/// Precomputed per-pixel correspondence and spectral tables shared by every
/// frame of a stack. Building it does all the expensive model queries once;
/// rendering a pattern is then a cheap per-pixel sum.
struct RenderContext {
  const Scene* scene = nullptr;
  const Rig* rig = nullptr;
  WavelengthGrid grid;
  int width = 0, height = 0;
  int nl = 0;

  // spectral tables (dense on grid)
  std::array<std::vector<double>, 3> cam_w, proj_w;
  std::vector<double> proj_sum;
  std::vector<double> eta0;
  std::vector<int> first_orders;               // modeled ∩ rig, sorted
  std::vector<std::vector<double>> eta_first;  // per first order

  // per-pixel geometry
  std::vector<std::uint8_t> valid;     // depth defined, hull OK
  std::vector<std::uint8_t> complete;  // all candidate first orders valid
  std::vector<float> d2inv;
  std::vector<double> col0;            // fractional zero-order column
  std::vector<std::int32_t> col0_px, row0_px;      // rounded, -1 if off panel
  std::vector<std::vector<std::int32_t>> first_px; // [order][pix*nl+j], -1 unused

  size_t pix(int x, int y) const {
    return static_cast<size_t>(y) * static_cast<size_t>(width) +
           static_cast<size_t>(x);
  }
};

inline RenderContext make_render_context(const Scene& scene, const Rig& rig,
                                         const CorrespondenceModel& model,
                                         const ResponseSet& responses,
                                         const EfficiencySet& eta) {
  scene.validate();
  rig.validate();
  detail::require(scene.width == rig.camera.width &&
                      scene.height == rig.camera.height,
                  "scene must match the camera resolution");

  RenderContext ctx;
  ctx.scene = &scene;
  ctx.rig = &rig;
  ctx.grid = scene.grid;
  ctx.width = scene.width;
  ctx.height = scene.height;
  ctx.nl = scene.grid.count;

  for (int c = 0; c < 3; ++c) {
    ctx.cam_w[size_t(c)] =
        resample(responses.cam[size_t(c)], ctx.grid).values;
    ctx.proj_w[size_t(c)] =
        resample(responses.proj[size_t(c)], ctx.grid).values;
  }
  ctx.proj_sum.assign(size_t(ctx.nl), 0.0);
  for (int j = 0; j < ctx.nl; ++j)
    for (int c = 0; c < 3; ++c)
      ctx.proj_sum[size_t(j)] += ctx.proj_w[size_t(c)][size_t(j)];
  ctx.eta0 = resample(eta.at(0), ctx.grid).values;
  for (int m : model.orders)
    if (rig.grating.has_order(m) && eta.has(m)) {
      ctx.first_orders.push_back(m);
      ctx.eta_first.push_back(resample(eta.at(m), ctx.grid).values);
    }

  const size_t npx = size_t(ctx.width) * size_t(ctx.height);
  ctx.valid.assign(npx, 0);
  ctx.complete.assign(npx, 1);
  ctx.d2inv.assign(npx, 0.f);
  ctx.col0.assign(npx, 0.0);
  ctx.col0_px.assign(npx, -1);
  ctx.row0_px.assign(npx, -1);
  ctx.first_px.assign(ctx.first_orders.size(), {});
  for (auto& v : ctx.first_px) v.assign(npx * size_t(ctx.nl), -1);

  const int W = rig.projector.width, H = rig.projector.height;
  parallel_for(0, ctx.height, [&](int y) {
    for (int x = 0; x < ctx.width; ++x) {
      const size_t k = ctx.pix(x, y);
      if (!scene.has_depth(x, y)) continue;
      const double z = scene.depth.at(x, y);
      const Eigen::Vector2d p{double(x), double(y)};
      Eigen::Vector2d q0;
      LatticeWeights lw;
      double zc;
      try {
        q0 = zero_order(p, z, rig);
        if (!ctx.first_orders.empty()) {
          zc = model.clamp_depth(z, nullptr);
          lw = model.lattice_weights(p);
        } else {
          zc = z;
        }
      } catch (const Error&) {
        continue;  // out of hull or unprojectable: pixel stays invalid
      }
      ctx.valid[k] = 1;
      double d = propagation_distance(p, z, rig);
      ctx.d2inv[k] = float(1.0 / (d * d));
      ctx.col0[k] = q0.x();
      std::int32_t c0 = std::int32_t(std::lround(q0.x()));
      std::int32_t r0 = std::int32_t(std::lround(q0.y()));
      ctx.col0_px[k] = (c0 >= 0 && c0 < W) ? c0 : -1;
      ctx.row0_px[k] = (r0 >= 0 && r0 < H) ? r0 : -1;

      const auto& ls = model.grids.lambdas;
      for (size_t o = 0; o < ctx.first_orders.size(); ++o) {
        const int m = ctx.first_orders[o];
        // strict validity: queried column on the panel at every knot
        std::vector<double> knot_cols(ls.size());
        bool ok = true;
        for (size_t il = 0; il < ls.size(); ++il) {
          knot_cols[il] = model.knot_column(lw, zc, m, int(il));
          if (knot_cols[il] < 0.0 || knot_cols[il] > W - 1) {
            ok = false;
            break;
          }
        }
        if (!ok) {
          ctx.complete[k] = 0;
          continue;
        }
        for (int j = 0; j < ctx.nl; ++j) {
          double l = ctx.grid.wavelength(j);
          auto lb = model.lambda_bracket(l);
          double col = knot_cols[size_t(lb.il)];
          if (lb.w > 0.0)
            col = (1.0 - lb.w) * col +
                  lb.w * knot_cols[std::min(size_t(lb.il) + 1,
                                            ls.size() - 1)];
          std::int32_t ci = std::int32_t(std::lround(col));
          ctx.first_px[o][k * size_t(ctx.nl) + size_t(j)] =
              (ci >= 0 && ci < W) ? ci : -1;
        }
      }
      if (!ctx.valid[k]) ctx.complete[k] = 0;
    }
  });
  return ctx;
}

namespace detail {

inline float clip_value(double v, const RenderOptions& opt) {
  double out = v * opt.exposure * opt.intensity;
  if (opt.saturation >= 0.0) out = std::min(out, opt.saturation);
  return float(out);
}

}  // namespace detail

/// Renders one (possibly channel-varying) pattern through the dispersive
/// image formation model.
inline Image render(const Pattern& pattern, const RenderContext& ctx,
                    const RenderOptions& opt = {}) {
  detail::require(pattern.width == ctx.rig->projector.width &&
                      pattern.height == ctx.rig->projector.height,
                  "pattern must match the projector resolution");
  Image out(ctx.width, ctx.height);
  const Scene& scene = *ctx.scene;
  parallel_for(0, ctx.height, [&](int y) {
    for (int x = 0; x < ctx.width; ++x) {
      const size_t k = ctx.pix(x, y);
      if (!ctx.valid[k]) continue;
      const std::int32_t row = ctx.row0_px[k];
      if (row < 0) continue;
      double acc[3] = {0, 0, 0};
      for (int j = 0; j < ctx.nl; ++j) {
        double radiance = 0.0;
        if (ctx.col0_px[k] >= 0) {
          double L = 0.0;
          for (int c = 0; c < 3; ++c)
            L += ctx.proj_w[size_t(c)][size_t(j)] *
                 pattern.at(ctx.col0_px[k], row, c);
          radiance += ctx.eta0[size_t(j)] * L;
        }
        for (size_t o = 0; o < ctx.first_orders.size(); ++o) {
          std::int32_t col = ctx.first_px[o][k * size_t(ctx.nl) + size_t(j)];
          if (col < 0) continue;
          double L = 0.0;
          for (int c = 0; c < 3; ++c)
            L += ctx.proj_w[size_t(c)][size_t(j)] * pattern.at(col, row, c);
          radiance += ctx.eta_first[o][size_t(j)] * L;
        }
        if (radiance == 0.0) continue;
        double g = radiance * double(ctx.d2inv[k]) *
                   double(scene.reflectance.at(x, y, j));
        for (int c = 0; c < 3; ++c)
          acc[c] += ctx.cam_w[size_t(c)][size_t(j)] * g;
      }
      for (int c = 0; c < 3; ++c)
        out.at(x, y, c) = detail::clip_value(acc[c], opt);
    }
  });
  return out;
}

namespace detail {

// Scanline stacks dominate render cost; per pixel we precompute the sorted
// projector columns that can ever light it, then each frame touches only the
// events inside its line.
struct ColumnEvent {
  std::int32_t col;
  std::int16_t order;   // -1: zero order, otherwise index into first_orders
  std::int16_t lambda;  // -1 for zero order
};

inline CaptureStack render_scanline_stack(const PatternSet& set,
                                          const RenderContext& ctx,
                                          const RenderOptions& opt) {
  const Scene& scene = *ctx.scene;
  const size_t npx = size_t(ctx.width) * size_t(ctx.height);
  std::vector<std::vector<ColumnEvent>> events(npx);
  parallel_for(0, ctx.height, [&](int y) {
    for (int x = 0; x < ctx.width; ++x) {
      const size_t k = ctx.pix(x, y);
      if (!ctx.valid[k] || ctx.row0_px[k] < 0) continue;
      auto& ev = events[k];
      if (ctx.col0_px[k] >= 0) ev.push_back({ctx.col0_px[k], -1, -1});
      for (size_t o = 0; o < ctx.first_orders.size(); ++o)
        for (int j = 0; j < ctx.nl; ++j) {
          std::int32_t col = ctx.first_px[o][k * size_t(ctx.nl) + size_t(j)];
          if (col >= 0) ev.push_back({col, std::int16_t(o), std::int16_t(j)});
        }
      std::sort(ev.begin(), ev.end(),
                [](const ColumnEvent& a, const ColumnEvent& b) {
                  return a.col < b.col;
                });
    }
  });

  CaptureStack stack;
  stack.patterns = set;
  stack.width = ctx.width;
  stack.height = ctx.height;
  stack.exposure = opt.exposure;
  stack.intensity = opt.intensity;
  stack.frames.assign(size_t(set.size()), Image());
  const int K = set.size();
  // Parallelize across frames; each frame walks its own image.
  parallel_for(0, K, [&](int i) {
    Image frame(ctx.width, ctx.height);
    const std::int32_t lo = set.scan.shift * i;
    const std::int32_t hi =
        std::min(lo + set.scan.line_width, set.width);  // [lo, hi)
    for (int y = 0; y < ctx.height; ++y)
      for (int x = 0; x < ctx.width; ++x) {
        const size_t k = ctx.pix(x, y);
        const auto& ev = events[k];
        if (ev.empty()) continue;
        auto it = std::lower_bound(
            ev.begin(), ev.end(), lo,
            [](const ColumnEvent& e, std::int32_t c) { return e.col < c; });
        double acc[3] = {0, 0, 0};
        bool any = false;
        for (; it != ev.end() && it->col < hi; ++it) {
          any = true;
          if (it->order < 0) {
            for (int j = 0; j < ctx.nl; ++j) {
              double g = ctx.eta0[size_t(j)] * ctx.proj_sum[size_t(j)] *
                         double(scene.reflectance.at(x, y, j));
              for (int c = 0; c < 3; ++c)
                acc[c] += ctx.cam_w[size_t(c)][size_t(j)] * g;
            }
          } else {
            const int j = it->lambda;
            double g = ctx.eta_first[size_t(it->order)][size_t(j)] *
                       ctx.proj_sum[size_t(j)] *
                       double(scene.reflectance.at(x, y, j));
            for (int c = 0; c < 3; ++c)
              acc[c] += ctx.cam_w[size_t(c)][size_t(j)] * g;
          }
        }
        if (!any) continue;
        for (int c = 0; c < 3; ++c)
          frame.at(x, y, c) =
              clip_value(acc[c] * double(ctx.d2inv[k]), opt);
      }
    stack.frames[size_t(i)] = std::move(frame);
  });
  return stack;
}

// Binary and reference patterns light many columns; evaluate the generic sum
// using the channel-uniform pattern value.
inline CaptureStack render_uniform_stack(const PatternSet& set,
                                         const RenderContext& ctx,
                                         const RenderOptions& opt) {
  const Scene& scene = *ctx.scene;
  CaptureStack stack;
  stack.patterns = set;
  stack.width = ctx.width;
  stack.height = ctx.height;
  stack.exposure = opt.exposure;
  stack.intensity = opt.intensity;
  stack.frames.assign(size_t(set.size()), Image());
  const int K = set.size();
  for (int i = 0; i < K; ++i) {
    Image frame(ctx.width, ctx.height);
    parallel_for(0, ctx.height, [&](int y) {
      for (int x = 0; x < ctx.width; ++x) {
        const size_t k = ctx.pix(x, y);
        if (!ctx.valid[k]) continue;
        const std::int32_t row = ctx.row0_px[k];
        if (row < 0) continue;
        double acc[3] = {0, 0, 0};
        for (int j = 0; j < ctx.nl; ++j) {
          double radiance = 0.0;
          if (ctx.col0_px[k] >= 0)
            radiance += ctx.eta0[size_t(j)] *
                        double(set.value(i, ctx.col0_px[k], row)) *
                        ctx.proj_sum[size_t(j)];
          for (size_t o = 0; o < ctx.first_orders.size(); ++o) {
            std::int32_t col = ctx.first_px[o][k * size_t(ctx.nl) + size_t(j)];
            if (col < 0) continue;
            double pv = double(set.value(i, col, row));
            if (pv != 0.0)
              radiance += ctx.eta_first[o][size_t(j)] * pv *
                          ctx.proj_sum[size_t(j)];
          }
          if (radiance == 0.0) continue;
          double g = radiance * double(ctx.d2inv[k]) *
                     double(scene.reflectance.at(x, y, j));
          for (int c = 0; c < 3; ++c)
            acc[c] += ctx.cam_w[size_t(c)][size_t(j)] * g;
        }
        for (int c = 0; c < 3; ++c)
          frame.at(x, y, c) = clip_value(acc[c], opt);
      }
    });
    stack.frames[size_t(i)] = std::move(frame);
  }
  return stack;
}

}  // namespace detail

inline CaptureStack render_stack(const PatternSet& set,
                                 const RenderContext& ctx,
                                 const RenderOptions& opt = {}) {
  detail::require(set.width == ctx.rig->projector.width &&
                      set.height == ctx.rig->projector.height,
                  "pattern set must match the projector resolution");
  CaptureStack stack =
      set.kind == PatternKind::scanline
          ? detail::render_scanline_stack(set, ctx, opt)
          : detail::render_uniform_stack(set, ctx, opt);
  stack.validate();
  return stack;
}

/// Adds clamped Gaussian noise, deterministically addressed by
/// (seed, frame, y, x, channel) so any pixel partitioning yields identical
/// output. sigma = 0 leaves the stack untouched.
inline void add_noise(CaptureStack& stack, double sigma, std::uint64_t seed) {
  detail::require(sigma >= 0.0, "sigma must be non-negative");
  stack.sigma = sigma;
  stack.seed = seed;
  if (sigma == 0.0) return;
  const int K = int(stack.frames.size());
  for (int f = 0; f < K; ++f) {
    Image& img = stack.frames[size_t(f)];
    parallel_for(0, img.height, [&, f](int y) {
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c) {
          float& v = img.at(x, y, c);
          double n = rng::normal(seed, std::uint64_t(f), std::uint64_t(y),
                                 std::uint64_t(x), std::uint64_t(c));
          v = std::max(0.f, float(double(v) + sigma * n));
        }
    });
  }
}

// ---------------------------------------------------------------------------
// Two-setting HDR capture simulation and merge
// ---------------------------------------------------------------------------

struct HdrSettings {
  double exposure_low = 160.0, intensity_low = 0.2;
  double exposure_high = 320.0, intensity_high = 0.8;
  double saturation = 1.0;
  double black_level = 0.0;
  double hat_lo = 0.05, hat_hi = 0.95;  // plateau of the weight, in units of
                                        // the saturation level
};

/// Renders the same stack at the low and high capture settings, clipping at
/// the saturation level (and optionally adding noise before the clip).
inline std::pair<CaptureStack, CaptureStack> simulate_hdr_pair(
    const PatternSet& set, const RenderContext& ctx, const HdrSettings& hdr,
    double sigma = 0.0, std::uint64_t seed = 0) {
  RenderOptions base;
  CaptureStack radiance = render_stack(set, ctx, base);
  auto expose = [&](double e, double i, std::uint64_t s) {
    CaptureStack out = radiance;
    out.exposure = e;
    out.intensity = i;
    const double scale = e * i;
    for (auto& f : out.frames)
      for (auto& v : f.v) v = float(double(v) * scale);
    if (sigma > 0.0) add_noise(out, sigma, s);
    for (auto& f : out.frames)
      for (auto& v : f.v) v = std::min(v, float(hdr.saturation));
    return out;
  };
  return {expose(hdr.exposure_low, hdr.intensity_low, seed),
          expose(hdr.exposure_high, hdr.intensity_high, seed + 1)};
}

namespace detail {

inline double hat_weight(double v, const HdrSettings& h) {
  const double lo = h.hat_lo * h.saturation, hi = h.hat_hi * h.saturation;
  if (v <= h.black_level || v >= h.saturation) return 0.0;
  if (v < lo)
    return (v - h.black_level) / std::max(lo - h.black_level, 1e-300);
  if (v > hi) return (h.saturation - v) / std::max(h.saturation - hi, 1e-300);
  return 1.0;
}

}  // namespace detail

/// Merges two capture settings into linear radiance. Saturated-in-both
/// pixels are flagged and keep the larger (least-clipped) estimate.
inline CaptureStack merge_hdr(const CaptureStack& low,
                              const CaptureStack& high,
                              const HdrSettings& hdr) {
  detail::require(low.frames.size() == high.frames.size() &&
                      low.width == high.width && low.height == high.height,
                  "stacks must match");
  CaptureStack out;
  out.patterns = low.patterns;
  out.width = low.width;
  out.height = low.height;
  out.exposure = 1.0;
  out.intensity = 1.0;
  out.frames.assign(low.frames.size(), Image());
  out.saturated.assign(size_t(low.width) * size_t(low.height), 0);
  const double sl = low.exposure * low.intensity;
  const double sh = high.exposure * high.intensity;
  detail::require(sl > 0.0 && sh > 0.0, "capture scales must be positive");
  for (size_t f = 0; f < low.frames.size(); ++f) {
    Image merged(low.width, low.height);
    const Image& a = low.frames[f];
    const Image& b = high.frames[f];
    parallel_for(0, low.height, [&](int y) {
      for (int x = 0; x < low.width; ++x)
        for (int c = 0; c < 3; ++c) {
          double va = a.at(x, y, c), vb = b.at(x, y, c);
          double wa = detail::hat_weight(va, hdr);
          double wb = detail::hat_weight(vb, hdr);
          double ra = (va - hdr.black_level) / sl;
          double rb = (vb - hdr.black_level) / sh;
          double v;
          if (wa + wb > 0.0) {
            v = (wa * ra + wb * rb) / (wa + wb);
          } else if (va >= hdr.saturation - 1e-12 &&
                     vb >= hdr.saturation - 1e-12) {
            v = std::max(ra, rb);  // both clipped: keep the lower bound
            out.saturated[size_t(y) * size_t(low.width) + size_t(x)] = 1;
          } else {
            v = rb;  // both near black: higher-scale reading has better SNR
          }
          merged.at(x, y, c) = float(std::max(v, 0.0));
        }
    });
    out.frames[f] = std::move(merged);
  }
  return out;
}

}  // namespace dsl

#endif  // DSL_FORWARD_SIM_HPP
