// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include <cmath>
#include <cstdint>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "dsl/demo.hpp"
#include "dsl/forward_sim.hpp"

using namespace dsl;

namespace {

struct Fixture {
  Rig rig;
  CorrespondenceModel model;
  Scene scene;
  ResponseSet responses;
  EfficiencySet eta;
  RenderContext ctx;
};

const Fixture& fx() {
  static Fixture f;
  static bool init = false;
  if (!init) {
    f.rig = make_demo_rig();
    f.model = build_correspondence_model(f.rig, demo_sample_grids(), {-1, 1});
    f.scene = make_colorchecker_scene(WavelengthGrid::standard());
    f.scene.depth.at(3, 4) = 0.f;  // a hole, to exercise invalid pixels
    f.responses = ResponseSet::shipped_default(f.scene.grid);
    f.eta = EfficiencySet::shipped_default(f.scene.grid);
    f.ctx = make_render_context(f.scene, f.rig, f.model, f.responses, f.eta);
    init = true;
  }
  return f;
}

// Image formation evaluated directly from the correspondence model, one
// pixel at a time: dispersed pattern samples weighted by grating efficiency
// and inverse-square falloff, integrated against the camera responses.
Image oracle_render(const Pattern& pattern, const Fixture& f,
                    const RenderOptions& opt = {}) {
  const Scene& scene = f.scene;
  const WavelengthGrid& grid = scene.grid;
  const int W = f.rig.projector.width, H = f.rig.projector.height;
  const auto& knots = f.model.grids.lambdas;

  std::array<std::vector<double>, 3> cam, proj;
  for (int c = 0; c < 3; ++c) {
    cam[size_t(c)] = resample(f.responses.cam[size_t(c)], grid).values;
    proj[size_t(c)] = resample(f.responses.proj[size_t(c)], grid).values;
  }
  std::vector<double> eta0 = resample(f.eta.at(0), grid).values;
  std::vector<std::vector<double>> etam;
  for (int m : {-1, 1}) etam.push_back(resample(f.eta.at(m), grid).values);

  Image out(scene.width, scene.height);
  for (int y = 0; y < scene.height; ++y)
    for (int x = 0; x < scene.width; ++x) {
      if (!scene.has_depth(x, y)) continue;
      double z = scene.depth.at(x, y);
      Eigen::Vector2d p{double(x), double(y)};
      Eigen::Vector2d q0 = zero_order(p, z, f.rig);
      int row = int(std::lround(q0.y()));
      if (row < 0 || row >= H) continue;
      int col0 = int(std::lround(q0.x()));
      bool has0 = col0 >= 0 && col0 < W;

      // orders contribute only when on the panel at every wavelength knot
      std::array<bool, 2> use{true, true};
      for (size_t o = 0; o < 2; ++o)
        for (double l : knots) {
          double c = f.model.query(p, z, o == 0 ? -1 : 1, l);
          if (c < 0.0 || c > W - 1) {
            use[o] = false;
            break;
          }
        }

      double d = propagation_distance(p, z, f.rig);
      double w2 = double(float(1.0 / (d * d)));
      double acc[3] = {0, 0, 0};
      for (int j = 0; j < grid.count; ++j) {
        double radiance = 0.0;
        if (has0) {
          double L = 0.0;
          for (int c = 0; c < 3; ++c)
            L += proj[size_t(c)][size_t(j)] * pattern.at(col0, row, c);
          radiance += eta0[size_t(j)] * L;
        }
        for (size_t o = 0; o < 2; ++o) {
          if (!use[o]) continue;
          int m = o == 0 ? -1 : 1;
          int col = int(std::lround(f.model.query(p, z, m, grid.wavelength(j))));
          if (col < 0 || col >= W) continue;
          double L = 0.0;
          for (int c = 0; c < 3; ++c)
            L += proj[size_t(c)][size_t(j)] * pattern.at(col, row, c);
          radiance += etam[o][size_t(j)] * L;
        }
        if (radiance == 0.0) continue;
        double g = radiance * w2 * double(scene.reflectance.at(x, y, j));
        for (int c = 0; c < 3; ++c) acc[c] += cam[size_t(c)][size_t(j)] * g;
      }
      for (int c = 0; c < 3; ++c)
        out.at(x, y, c) =
            float(std::min(acc[c] * opt.exposure * opt.intensity,
                           opt.saturation >= 0 ? opt.saturation : 1e300));
    }
  return out;
}

void require_close(const Image& a, const Image& b, double rel, double abs) {
  REQUIRE(a.width == b.width);
  REQUIRE(a.height == b.height);
  for (size_t i = 0; i < a.v.size(); ++i) {
    double tol = rel * std::max(std::abs(double(a.v[i])),
                                std::abs(double(b.v[i]))) + abs;
    REQUIRE(std::abs(double(a.v[i]) - double(b.v[i])) <= tol);
  }
}

}  // namespace

TEST_CASE("render agrees with a per-pixel model-query evaluation",
          "[forward]") {
  const Fixture& f = fx();
  RenderOptions opt;
  opt.exposure = 1.5e4;

  auto white = gen_reference(2304, 720).materialize(0);
  require_close(render(white, f.ctx, opt), oracle_render(white, f, opt),
                1e-5, 1e-12);

  auto bit0 = gen_binary_codes(2304, 720).materialize(0);
  require_close(render(bit0, f.ctx, opt), oracle_render(bit0, f, opt),
                1e-5, 1e-12);

  auto line = gen_scanlines(2304, 720).materialize(700);
  RenderOptions scan_opt;
  scan_opt.exposure = 3.0e6;
  require_close(render(line, f.ctx, scan_opt),
                oracle_render(line, f, scan_opt), 1e-5, 1e-12);
}

TEST_CASE("scanline stack frames match the generic renderer", "[forward]") {
  const Fixture& f = fx();
  auto set = gen_scanlines(2304, 720);
  RenderOptions opt;
  opt.exposure = 3.0e6;
  CaptureStack stack = render_stack(set, f.ctx, opt);
  REQUIRE(stack.frames.size() == 1150);
  REQUIRE(stack.exposure == opt.exposure);
  for (int i : {0, 317, 700, 1149})
    require_close(stack.frames[size_t(i)],
                  render(set.materialize(i), f.ctx, opt), 1e-6, 1e-12);
}

TEST_CASE("rendering is linear in exposure and intensity", "[forward]") {
  const Fixture& f = fx();
  auto white = gen_reference(2304, 720).materialize(0);
  Image base = render(white, f.ctx, {});
  RenderOptions opt;
  opt.exposure = 2.0;
  opt.intensity = 4.0;
  Image scaled = render(white, f.ctx, opt);
  // power-of-two scaling commutes with float rounding, so this is exact
  for (size_t i = 0; i < base.v.size(); ++i)
    REQUIRE(scaled.v[i] == 8.0f * base.v[i]);
}

TEST_CASE("bit frame plus its complement renders like white", "[forward]") {
  const Fixture& f = fx();
  auto bits = gen_binary_codes(2304, 720);
  Pattern bit = bits.materialize(3);
  Pattern comp = bit;
  for (auto& v : comp.rgb) v = 1.f - v;
  Pattern white = gen_reference(2304, 720).materialize(0);

  RenderOptions opt;
  opt.exposure = 1.5e4;
  Image a = render(bit, f.ctx, opt);
  Image b = render(comp, f.ctx, opt);
  Image w = render(white, f.ctx, opt);
  for (size_t i = 0; i < w.v.size(); ++i) {
    double sum = double(a.v[i]) + double(b.v[i]);
    REQUIRE(std::abs(sum - double(w.v[i])) <=
            1e-6 * std::max(1e-12, double(w.v[i])));
  }
}

TEST_CASE("saturation clips rendered values", "[forward]") {
  const Fixture& f = fx();
  auto white = gen_reference(2304, 720).materialize(0);
  RenderOptions raw_opt;
  raw_opt.exposure = 1.5e4;
  Image raw = render(white, f.ctx, raw_opt);
  RenderOptions opt = raw_opt;
  opt.saturation = 0.2;
  Image clipped = render(white, f.ctx, opt);
  bool any_clipped = false;
  for (size_t i = 0; i < raw.v.size(); ++i) {
    REQUIRE(clipped.v[i] <= 0.2f);
    if (raw.v[i] > 0.2f) {
      REQUIRE(clipped.v[i] == 0.2f);
      any_clipped = true;
    } else {
      REQUIRE(clipped.v[i] == raw.v[i]);
    }
  }
  REQUIRE(any_clipped);
}

TEST_CASE("pixels without depth render black and stay invalid", "[forward]") {
  const Fixture& f = fx();
  REQUIRE(f.ctx.valid[f.ctx.pix(3, 4)] == 0);
  REQUIRE(f.ctx.valid[f.ctx.pix(30, 30)] == 1);
  auto white = gen_reference(2304, 720).materialize(0);
  Image img = render(white, f.ctx, {});
  for (int c = 0; c < 3; ++c) REQUIRE(img.at(3, 4, c) == 0.f);
}

TEST_CASE("resolution mismatches are rejected", "[forward]") {
  const Fixture& f = fx();
  REQUIRE_THROWS_AS(render_stack(gen_reference(640, 480), f.ctx, {}),
                    DomainError);
  REQUIRE_THROWS_AS(render(gen_reference(640, 480).materialize(0), f.ctx, {}),
                    DomainError);
}

TEST_CASE("noise is deterministic, unbiased, and clamps at zero", "[forward]") {
  CaptureStack stack;
  stack.width = 64;
  stack.height = 64;
  stack.frames.assign(1, Image(64, 64));
  for (auto& v : stack.frames[0].v) v = 1.0f;

  SECTION("sigma 0 is a bitwise no-op") {
    CaptureStack copy = stack;
    add_noise(copy, 0.0, 42);
    REQUIRE(copy.frames[0].v == stack.frames[0].v);
    REQUIRE(copy.sigma == 0.0);
    REQUIRE(copy.seed == 42);
  }
  SECTION("noise statistics match the requested sigma") {
    CaptureStack noisy = stack;
    add_noise(noisy, 0.05, 42);
    double sum = 0, sum2 = 0;
    size_t n = noisy.frames[0].v.size();
    for (size_t i = 0; i < n; ++i) {
      double d = double(noisy.frames[0].v[i]) - 1.0;
      sum += d;
      sum2 += d * d;
    }
    double mean = sum / double(n);
    double var = sum2 / double(n) - mean * mean;
    CHECK(std::abs(mean) < 2e-3);
    CHECK(var > 0.9 * 0.05 * 0.05);
    CHECK(var < 1.1 * 0.05 * 0.05);
  }
  SECTION("same seed reproduces, different seed differs") {
    CaptureStack a = stack, b = stack, c = stack;
    add_noise(a, 0.05, 7);
    add_noise(b, 0.05, 7);
    add_noise(c, 0.05, 8);
    REQUIRE(a.frames[0].v == b.frames[0].v);
    REQUIRE(a.frames[0].v != c.frames[0].v);
  }
  SECTION("values never go negative") {
    CaptureStack dark = stack;
    for (auto& v : dark.frames[0].v) v = 0.f;
    add_noise(dark, 0.5, 3);
    for (float v : dark.frames[0].v) REQUIRE(v >= 0.f);
  }
  SECTION("negative sigma is rejected") {
    REQUIRE_THROWS_AS(add_noise(stack, -0.1, 0), DomainError);
  }
}

TEST_CASE("hdr pair is linear across settings and merges to radiance",
          "[forward]") {
  const Fixture& f = fx();
  auto set = gen_reference(2304, 720);
  CaptureStack raw = render_stack(set, f.ctx, {});

  HdrSettings hdr;
  hdr.exposure_low = 1.0;
  hdr.intensity_low = 0.25;
  hdr.exposure_high = 2.0;
  hdr.intensity_high = 1.0;
  auto [low, high] = simulate_hdr_pair(set, f.ctx, hdr);

  SECTION("unsaturated captures scale exactly with exposure * intensity") {
    for (size_t i = 0; i < raw.frames[0].v.size(); ++i) {
      REQUIRE(low.frames[0].v[i] == 0.25f * raw.frames[0].v[i]);
      REQUIRE(high.frames[0].v[i] == 8.0f * low.frames[0].v[i]);
    }
  }
  SECTION("merge recovers the unclipped radiance") {
    CaptureStack merged = merge_hdr(low, high, hdr);
    REQUIRE(merged.exposure == 1.0);
    for (size_t fi = 0; fi < raw.frames.size(); ++fi)
      require_close(merged.frames[fi], raw.frames[fi], 2e-6, 1e-12);
    for (auto s : merged.saturated) REQUIRE(s == 0);
  }
  SECTION("saturated-in-both pixels are flagged") {
    HdrSettings tight = hdr;
    // float-exact level far below any lit pixel, so both captures clip to it
    tight.saturation = std::ldexp(1.0, -20);
    auto [l2, h2] = simulate_hdr_pair(set, f.ctx, tight);
    CaptureStack merged = merge_hdr(l2, h2, tight);
    size_t flagged = 0;
    for (auto s : merged.saturated) flagged += s;
    REQUIRE(flagged > 0);
  }
}

TEST_CASE("capture stacks validate their shape", "[forward]") {
  CaptureStack s;
  s.patterns = gen_reference(640, 480);
  s.width = 64;
  s.height = 64;
  s.frames.assign(1, Image(64, 64));
  REQUIRE_THROWS_AS(s.validate(), DomainError);  // 1 frame, 2 patterns
  s.frames.assign(2, Image(64, 64));
  REQUIRE_NOTHROW(s.validate());
  s.frames[1] = Image(32, 64);
  REQUIRE_THROWS_AS(s.validate(), DomainError);
}
