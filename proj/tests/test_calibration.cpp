// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "dsl/calibration.hpp"
#include "dsl/demo.hpp"
#include "dsl/reconstruction.hpp"

using namespace dsl;

namespace {

struct Fixture {
  Rig rig;
  CorrespondenceModel model;
  WavelengthGrid grid;
  ResponseSet responses;
};

const Fixture& fx() {
  static Fixture f;
  static bool init = false;
  if (!init) {
    f.rig = make_demo_rig();
    f.model = build_correspondence_model(f.rig, demo_sample_grids(), {-1, 1});
    f.grid = WavelengthGrid::standard();
    f.responses = ResponseSet::shipped_default(f.grid);
    init = true;
  }
  return f;
}

Image render_bar(const EtaCaptureSpec& cap, const EfficiencySet& gt) {
  const Fixture& f = fx();
  Scene scene = make_plane_scene(64, 64, f.grid, 400.0, 0.99);
  apply_bandpass(scene, make_boxcar_bandpass(cap.lambda_nm, 10.0, f.grid));
  RenderContext ctx =
      make_render_context(scene, f.rig, f.model, f.responses, gt);
  RenderOptions opt;
  opt.exposure = 1.5e4;
  return render(make_bar_pattern(2304, 720, cap.bar_x0, 5), ctx, opt);
}

// synthesize patch intensities with the same bilinear model refine uses
void fill_intensities(std::vector<PatchObservation>& obs,
                      const ResponseSet& r, const EfficiencySet& eta,
                      const std::vector<int>& orders,
                      const WavelengthGrid& grid) {
  std::array<std::vector<double>, 3> cam, proj;
  for (int c = 0; c < 3; ++c) {
    cam[size_t(c)] = resample(r.cam[size_t(c)], grid).values;
    proj[size_t(c)] = resample(r.proj[size_t(c)], grid).values;
  }
  for (auto& o : obs) {
    auto h = resample(o.reflectance, grid).values;
    o.intensity.assign(orders.size(), {0.0, 0.0, 0.0});
    for (size_t oi = 0; oi < orders.size(); ++oi) {
      auto et = resample(eta.at(orders[oi]), grid).values;
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int j = 0; j < grid.count; ++j) {
          double L = proj[0][size_t(j)] + proj[1][size_t(j)] +
                     proj[2][size_t(j)];
          s += cam[size_t(c)][size_t(j)] * o.geom_scale * h[size_t(j)] *
               et[size_t(j)] * L;
        }
        o.intensity[oi][size_t(c)] = s;
      }
    }
  }
}

std::vector<PatchObservation> gaussian_patches(const WavelengthGrid& grid) {
  std::vector<PatchObservation> obs;
  for (auto [c, w] : std::vector<std::pair<double, double>>{
           {470, 30}, {520, 40}, {600, 35}, {640, 30}}) {
    PatchObservation o;
    std::vector<double> h(size_t(grid.count));
    for (int j = 0; j < grid.count; ++j) {
      double u = (grid.wavelength(j) - c) / w;
      h[size_t(j)] = 0.1 + 0.85 * std::exp(-0.5 * u * u);
    }
    o.reflectance = SpectralCurve(grid, std::move(h));
    obs.push_back(std::move(o));
  }
  return obs;
}

double grad_sq(const ResponseSet& r, const WavelengthGrid& grid) {
  double s = 0.0;
  for (int c = 0; c < 3; ++c) {
    auto a = resample(r.cam[size_t(c)], grid).values;
    auto b = resample(r.proj[size_t(c)], grid).values;
    for (int j = 0; j + 1 < grid.count; ++j) {
      s += (a[size_t(j) + 1] - a[size_t(j)]) * (a[size_t(j) + 1] - a[size_t(j)]);
      s += (b[size_t(j) + 1] - b[size_t(j)]) * (b[size_t(j) + 1] - b[size_t(j)]);
    }
  }
  return s;
}

}  // namespace

TEST_CASE("boxcar bandpass keeps strictly interior samples", "[calibration]") {
  WavelengthGrid grid = WavelengthGrid::standard();
  SpectralCurve band = make_boxcar_bandpass(640.0, 10.0, grid);
  for (int j = 0; j < grid.count; ++j) {
    double want = grid.wavelength(j) == 640.0 ? 1.0 : 0.0;
    REQUIRE(band.values[size_t(j)] == want);
  }
  SpectralCurve wide = make_boxcar_bandpass(640.0, 20.0, grid);
  double mass = 0;
  for (double v : wide.values) mass += v;
  REQUIRE(mass == 3.0);  // 635, 640, 645
  REQUIRE_THROWS_AS(make_boxcar_bandpass(640.0, 0.0, grid), DomainError);
}

TEST_CASE("bandpass application multiplies the scene reflectance",
          "[calibration]") {
  WavelengthGrid grid = WavelengthGrid::standard();
  Scene scene = make_plane_scene(4, 4, grid, 400.0, 0.8);
  apply_bandpass(scene, make_boxcar_bandpass(520.0, 10.0, grid));
  for (int j = 0; j < grid.count; ++j) {
    float want = grid.wavelength(j) == 520.0 ? 0.8f : 0.0f;
    REQUIRE(scene.reflectance.at(2, 2, j) == want);
  }
}

TEST_CASE("bar patterns fill the requested columns", "[calibration]") {
  Pattern p = make_bar_pattern(64, 8, 10, 5);
  for (int x = 0; x < 64; ++x) {
    float want = (x >= 10 && x < 15) ? 1.f : 0.f;
    REQUIRE(p.at(x, 3, 0) == want);
    REQUIRE(p.at(x, 3, 2) == want);
  }
  REQUIRE_THROWS_AS(make_bar_pattern(64, 8, 61, 5), DomainError);
  REQUIRE_THROWS_AS(make_bar_pattern(64, 8, -1, 5), DomainError);
}

TEST_CASE("capture planning centers every order's blob in view",
          "[calibration]") {
  const Fixture& f = fx();
  auto specs = plan_eta_captures(f.rig, {470.0, 640.0}, {-1, 0, 1}, 400.0);
  REQUIRE(specs.size() == 6);
  Eigen::Vector2d center(31.5, 31.5);
  for (const auto& s : specs) {
    REQUIRE(s.bar_x0 >= 0);
    REQUIRE(s.bar_x0 + 5 <= 2304);
    auto px = detail::trace_to_camera({double(s.bar_x0 + 2), 359.5}, s.order,
                                      s.lambda_nm, 400.0, f.rig);
    REQUIRE(px.has_value());
    REQUIRE((*px - center).norm() <= 3.0);
  }
}

TEST_CASE("flat first-order efficiency is recovered exactly", "[calibration]") {
  const Fixture& f = fx();
  EfficiencySet gt;
  gt.eta.emplace(0, SpectralCurve(f.grid, 1.0));
  gt.eta.emplace(1, SpectralCurve(f.grid, 0.1));
  gt.eta.emplace(-1, SpectralCurve(f.grid, 0.07));

  EtaCalibrationSetup setup;
  setup.rig = f.rig;
  setup.plane_z = 400.0;
  setup.captures = plan_eta_captures(f.rig, {470.0, 640.0}, {-1, 0, 1}, 400.0);
  std::vector<Image> images;
  for (const auto& cap : setup.captures) images.push_back(render_bar(cap, gt));

  EtaEstimate est = estimate_eta(images, setup);
  REQUIRE(est.uncalibrated.empty());
  for (int j = 0; j < f.grid.count; ++j) {
    REQUIRE(est.eta.at(0).values[size_t(j)] == 1.0);
    REQUIRE(std::abs(est.eta.at(1).values[size_t(j)] - 0.1) <= 1e-6);
    REQUIRE(std::abs(est.eta.at(-1).values[size_t(j)] - 0.07) <= 1e-6);
  }
}

TEST_CASE("ramped efficiency interpolates within 1e-3", "[calibration]") {
  const Fixture& f = fx();
  std::vector<double> rp(size_t(f.grid.count)), rm(size_t(f.grid.count));
  for (int j = 0; j < f.grid.count; ++j) {
    double t = (f.grid.wavelength(j) - 430.0) / 230.0;
    rp[size_t(j)] = 0.05 + 0.15 * t;
    rm[size_t(j)] = 0.20 - 0.15 * t;
  }
  EfficiencySet gt;
  gt.eta.emplace(0, SpectralCurve(f.grid, 1.0));
  gt.eta.emplace(1, SpectralCurve(f.grid, rp));
  gt.eta.emplace(-1, SpectralCurve(f.grid, rm));

  EtaCalibrationSetup setup;
  setup.rig = f.rig;
  setup.plane_z = 400.0;
  setup.captures = plan_eta_captures(
      f.rig, {430.0, 490.0, 550.0, 610.0, 660.0}, {-1, 0, 1}, 400.0);
  std::vector<Image> images;
  for (const auto& cap : setup.captures) images.push_back(render_bar(cap, gt));

  EtaEstimate est = estimate_eta(images, setup);
  for (int j = 0; j < f.grid.count; ++j) {
    REQUIRE(std::abs(est.eta.at(1).values[size_t(j)] - rp[size_t(j)]) <= 1e-3);
    REQUIRE(std::abs(est.eta.at(-1).values[size_t(j)] - rm[size_t(j)]) <= 1e-3);
  }

  SECTION("ratios are invariant to a global exposure scale") {
    std::vector<Image> scaled = images;
    for (auto& img : scaled)
      for (auto& v : img.v) v *= 8.0f;
    EtaEstimate est2 = estimate_eta(scaled, setup);
    for (int j = 0; j < f.grid.count; ++j)
      for (int m : {-1, 1})
        REQUIRE(std::abs(est.eta.at(m).values[size_t(j)] -
                         est2.eta.at(m).values[size_t(j)]) <= 1e-12);
  }
}

TEST_CASE("an order whose blob misses the camera is uncalibrated",
          "[calibration]") {
  const Fixture& f = fx();
  EfficiencySet gt;
  gt.eta.emplace(0, SpectralCurve(f.grid, 1.0));
  gt.eta.emplace(1, SpectralCurve(f.grid, 0.1));
  gt.eta.emplace(-1, SpectralCurve(f.grid, 0.07));

  EtaCalibrationSetup setup;
  setup.rig = f.rig;
  setup.plane_z = 400.0;
  setup.captures = plan_eta_captures(f.rig, {640.0}, {0, -1}, 400.0);
  REQUIRE(setup.captures.size() == 2);
  for (auto& c : setup.captures)
    if (c.order == -1) c.bar_x0 = 2299 - c.bar_x0;  // push the blob off view
  std::vector<Image> images;
  for (const auto& cap : setup.captures) images.push_back(render_bar(cap, gt));

  EtaEstimate est = estimate_eta(images, setup);
  REQUIRE(est.uncalibrated == std::vector<int>{-1});
  REQUIRE_FALSE(est.eta.has(-1));
}

TEST_CASE("a measurable first order without its zero order is an error",
          "[calibration]") {
  const Fixture& f = fx();
  EfficiencySet gt;
  gt.eta.emplace(0, SpectralCurve(f.grid, 1.0));
  gt.eta.emplace(1, SpectralCurve(f.grid, 0.1));
  gt.eta.emplace(-1, SpectralCurve(f.grid, 0.07));

  EtaCalibrationSetup setup;
  setup.rig = f.rig;
  setup.plane_z = 400.0;
  setup.captures = plan_eta_captures(f.rig, {640.0}, {1}, 400.0);
  std::vector<Image> images;
  for (const auto& cap : setup.captures) images.push_back(render_bar(cap, gt));
  REQUIRE_THROWS_AS(estimate_eta(images, setup), CalibrationError);

  SECTION("image count must match the capture specs") {
    images.push_back(images.front());
    REQUIRE_THROWS_AS(estimate_eta(images, setup), DomainError);
  }
  SECTION("setup parameters are validated") {
    setup.plane_z = 0.0;
    REQUIRE_THROWS_AS(estimate_eta(images, setup), DomainError);
  }
}

TEST_CASE("extracted samples close the loop with the model", "[calibration]") {
  const Fixture& f = fx();
  Scene scene = make_plane_scene(64, 64, f.grid, 400.0, 0.99);
  apply_bandpass(scene, make_boxcar_bandpass(640.0, 10.0, f.grid));
  EfficiencySet eta = EfficiencySet::shipped_default(f.grid);
  RenderContext ctx =
      make_render_context(scene, f.rig, f.model, f.responses, eta);
  RenderOptions opt;
  opt.exposure = 3.0e6;
  CaptureStack stack = render_stack(gen_scanlines(2304, 720), ctx, opt);

  ExtractSetup xs;
  xs.lambda_nm = 640.0;
  xs.plane_z = 400.0;
  for (int y = 8; y < 64; y += 16)
    for (int x = 8; x < 64; x += 16) xs.pixels.push_back({x, y});

  ExtractDiagnostics diag;
  auto samples = extract_correspondence_samples(stack, xs, &diag);
  REQUIRE(diag.skipped_dark == 0);
  REQUIRE(diag.skipped_few_peaks == 0);
  REQUIRE(samples.size() == 3 * xs.pixels.size());  // m in {-1, 0, +1} each

  for (const auto& s : samples) {
    Eigen::Vector2d p(s.px, s.py);
    double want = s.m == 0 ? zero_order(p, s.z, f.rig).x()
                           : f.model.query(p, s.z, s.m, s.lambda);
    // half the scanline shift of quantization, plus fit residual headroom
    REQUIRE(std::abs(s.q_col - want) <= 1.0);
  }
}

TEST_CASE("all-dark traces are skipped with a diagnostic", "[calibration]") {
  CaptureStack stack;
  stack.patterns = gen_scanlines(640, 480);
  stack.width = stack.height = 8;
  stack.frames.assign(size_t(stack.patterns.size()), Image(8, 8));

  ExtractSetup xs;
  xs.lambda_nm = 640.0;
  xs.plane_z = 400.0;
  xs.pixels = {{1, 1}, {4, 4}, {6, 2}};
  ExtractDiagnostics diag;
  auto samples = extract_correspondence_samples(stack, xs, &diag);
  REQUIRE(samples.empty());
  REQUIRE(diag.skipped_dark == 3);

  xs.plane_z = -1.0;
  REQUIRE_THROWS_AS(extract_correspondence_samples(stack, xs, &diag),
                    DomainError);
  xs.plane_z = 400.0;
  xs.pixels = {{9, 1}};
  REQUIRE_THROWS_AS(extract_correspondence_samples(stack, xs, &diag),
                    DomainError);
}

TEST_CASE("response refinement is a fixed point at the ground truth",
          "[calibration]") {
  const Fixture& f = fx();
  std::vector<int> orders = {-1, 0, 1};
  EfficiencySet eta = EfficiencySet::shipped_default(f.grid);
  auto obs = gaussian_patches(f.grid);
  fill_intensities(obs, f.responses, eta, orders, f.grid);

  RefineResult res = refine_responses(f.responses, obs, orders, eta, f.grid);
  REQUIRE(res.converged);
  REQUIRE_FALSE(res.failed);
  REQUIRE(res.data_loss <= 1e-20);
  for (int c = 0; c < 3; ++c) {
    auto want = resample(f.responses.cam[size_t(c)], f.grid).values;
    for (int j = 0; j < f.grid.count; ++j)
      REQUIRE(std::abs(res.responses.cam[size_t(c)].values[size_t(j)] -
                       want[size_t(j)]) <= 1e-6);
  }
}

TEST_CASE("response refinement recovers from a perturbed start",
          "[calibration]") {
  const Fixture& f = fx();
  std::vector<int> orders = {-1, 0, 1};
  EfficiencySet eta = EfficiencySet::shipped_default(f.grid);
  auto obs = gaussian_patches(f.grid);
  fill_intensities(obs, f.responses, eta, orders, f.grid);

  ResponseSet pert = f.responses;
  for (int c = 0; c < 3; ++c) {
    for (size_t j = 0; j < pert.cam[size_t(c)].values.size(); ++j)
      pert.cam[size_t(c)].values[j] *= (j % 2 ? 1.1 : 0.9);
    for (size_t j = 0; j < pert.proj[size_t(c)].values.size(); ++j)
      pert.proj[size_t(c)].values[j] *= (j % 2 ? 0.9 : 1.1);
  }

  RefineOptions no_iters;
  no_iters.max_iters = 0;
  double before =
      refine_responses(pert, obs, orders, eta, f.grid, no_iters).data_loss;
  RefineResult after = refine_responses(pert, obs, orders, eta, f.grid);
  REQUIRE_FALSE(after.failed);
  REQUIRE(after.data_loss <= 0.1 * before);

  SECTION("loss never increases with a larger iteration budget") {
    double prev = std::numeric_limits<double>::max();
    for (int cap : {5, 20, 100}) {
      RefineOptions opt;
      opt.max_iters = cap;
      RefineResult r = refine_responses(pert, obs, orders, eta, f.grid, opt);
      REQUIRE(r.loss <= prev + 1e-12 * (1.0 + std::abs(prev)));
      prev = r.loss;
    }
  }
}

TEST_CASE("a huge smoothness weight flattens the curves", "[calibration]") {
  const Fixture& f = fx();
  std::vector<int> orders = {0, 1};
  EfficiencySet eta = EfficiencySet::shipped_default(f.grid);
  auto obs = gaussian_patches(f.grid);
  fill_intensities(obs, f.responses, eta, orders, f.grid);

  ResponseSet pert = f.responses;
  for (int c = 0; c < 3; ++c)
    for (size_t j = 0; j < pert.cam[size_t(c)].values.size(); ++j)
      pert.cam[size_t(c)].values[j] *= (j % 2 ? 1.1 : 0.9);

  RefineOptions bigw;
  bigw.smooth_w = 1e6;
  bigw.max_iters = 800;
  RefineResult res = refine_responses(pert, obs, orders, eta, f.grid, bigw);
  REQUIRE(grad_sq(res.responses, f.grid) <= grad_sq(pert, f.grid));
}
