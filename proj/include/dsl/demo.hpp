// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef DSL_DEMO_HPP
#define DSL_DEMO_HPP

// Shipped demo assets: two synthetic rigs and the scenes used by the demo
// pipelines and the acceptance checks. Everything here is ordinary library
// data; the CLI `demo` command writes the same assets to disk.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "dsl/correspondence.hpp"
#include "dsl/geometry.hpp"
#include "dsl/rng.hpp"
#include "dsl/scene.hpp"

namespace dsl {

namespace detail {

/// Projector pose: optical center at `center`, optical axis aimed at `target`
/// by a rotation about the y-axis (both expected in the y=0 plane).
inline void aim_projector(PinholeModel& proj, const Eigen::Vector3d& center,
                          const Eigen::Vector3d& target) {
  Eigen::Vector3d w = target - center;
  double norm = std::hypot(w.x(), w.z());
  double s = w.x() / norm, c = w.z() / norm;
  Eigen::Matrix3d R;
  R << c, 0, -s, 0, 1, 0, s, 0, c;
  proj.rotation = R;
  proj.translation = -(R * center);
}

}  // namespace detail

/// Desk-scale rig: 64x64 camera at the origin, a 2304x720 projector 375 mm
/// to the left and verged onto the working volume around z = 400 mm, with a
/// 350 line/mm grating. Both first orders stay on the panel over the whole
/// camera frame and depth hull, so demo reconstructions see full spectral
/// coverage.
inline Rig make_demo_rig() {
  Rig rig;
  rig.camera.fx = rig.camera.fy = 320.0;
  rig.camera.cx = rig.camera.cy = 31.5;
  rig.camera.width = rig.camera.height = 64;

  rig.projector.fx = rig.projector.fy = 3200.0;
  rig.projector.cx = 1151.5;
  rig.projector.cy = 359.5;
  rig.projector.width = 2304;
  rig.projector.height = 720;
  detail::aim_projector(rig.projector, {-375.0, 0.0, 0.0}, {0.0, 0.0, 400.0});

  rig.grating.groove_density = 3.5e-4;  // 350 lines/mm
  rig.grating.plane_offset_mm = 10.0;
  rig.grating.orders = {-1, 0, 1};
  rig.validate();
  return rig;
}

/// Correspondence sample grids for the demo rig: 13x13 camera lattice,
/// the 7 standard wavelength knots, 5 depths spanning the 340-460 mm hull.
inline SampleGrids demo_sample_grids() {
  SampleGrids g;
  g.pixel_xs = SampleGrids::linspace(0.0, 63.0, 13);
  g.pixel_ys = SampleGrids::linspace(0.0, 63.0, 13);
  g.lambdas = {430, 600, 610, 620, 640, 650, 660};
  g.depths = {340, 370, 400, 430, 460};
  return g;
}

/// Prototype-scale rig for the decoding noise sweep: 320x320 camera
/// (>= 1e5 pixels), 1280x720 projector 200 mm to the left verged onto
/// z = 700 mm. Working range 500-1000 mm.
inline Rig make_sweep_rig() {
  Rig rig;
  rig.camera.fx = rig.camera.fy = 1150.0;
  rig.camera.cx = rig.camera.cy = 159.5;
  rig.camera.width = rig.camera.height = 320;

  rig.projector.fx = rig.projector.fy = 1500.0;
  rig.projector.cx = 639.5;
  rig.projector.cy = 359.5;
  rig.projector.width = 1280;
  rig.projector.height = 720;
  detail::aim_projector(rig.projector, {-200.0, 0.0, 0.0}, {0.0, 0.0, 700.0});

  rig.grating.groove_density = 3.5e-4;
  rig.grating.plane_offset_mm = 10.0;
  rig.grating.orders = {-1, 0, 1};
  rig.validate();
  return rig;
}

inline SampleGrids sweep_sample_grids() {
  SampleGrids g;
  g.pixel_xs = SampleGrids::linspace(0.0, 319.0, 9);
  g.pixel_ys = SampleGrids::linspace(0.0, 319.0, 9);
  g.lambdas = {430, 600, 610, 620, 640, 650, 660};
  g.depths = {500, 625, 750, 875, 1000};
  return g;
}

/// Fixed capture exposures for the shipped rigs. A raw render at unit
/// exposure leaves pixel values around 1e-5 (the inverse-square falloff at
/// a few hundred mm dominates); these constants bring the captures to a
/// useful range and are what every shipped pipeline and check uses.
///
///  - binary_exposure puts the white reference near 0.3-0.6, so the additive
///    noise levels of the decoding sweep act on a unit-scale signal.
///  - scan_exposure puts the dispersed scanline responses at order one,
///    matching the scale the spectral regularizer weight assumes.
struct CaptureSettings {
  double binary_exposure = 1.0;
  double scan_exposure = 1.0;
};

inline CaptureSettings demo_capture_settings() { return {1.5e4, 3.0e6}; }

/// Sweep-rig exposure is tuned so the decoding error at noise level 0.01
/// sits near 0.8 mm and grows steeply past it, mirroring the prototype.
inline CaptureSettings sweep_capture_settings() { return {4.8e4, 6.0e6}; }

namespace detail {

struct PatchSpec {
  const char* name;
  double base;
  // up to two Gaussian lobes (amp, center nm, sigma nm)
  double a1, mu1, s1;
  double a2, mu2, s2;
};

inline SpectralCurve patch_curve(const PatchSpec& ps,
                                 const WavelengthGrid& grid) {
  std::vector<double> v(static_cast<size_t>(grid.count));
  for (int j = 0; j < grid.count; ++j) {
    double l = grid.wavelength(j);
    double x = ps.base;
    if (ps.a1 > 0) {
      double d = (l - ps.mu1) / ps.s1;
      x += ps.a1 * std::exp(-0.5 * d * d);
    }
    if (ps.a2 > 0) {
      double d = (l - ps.mu2) / ps.s2;
      x += ps.a2 * std::exp(-0.5 * d * d);
    }
    v[size_t(j)] = std::clamp(x, 0.02, 1.0);
  }
  return SpectralCurve(grid, std::move(v));
}

inline const std::array<PatchSpec, 24>& checker_specs() {
  static const std::array<PatchSpec, 24> specs = {{
      {"dark_skin", 0.10, 0.15, 600, 60, 0, 0, 0},
      {"light_skin", 0.25, 0.35, 600, 70, 0, 0, 0},
      {"blue_sky", 0.12, 0.30, 460, 40, 0, 0, 0},
      {"foliage", 0.08, 0.25, 540, 35, 0, 0, 0},
      {"blue_flower", 0.15, 0.35, 450, 35, 0.15, 640, 50},
      {"bluish_green", 0.15, 0.35, 500, 45, 0, 0, 0},
      {"orange", 0.06, 0.50, 610, 45, 0, 0, 0},
      {"purplish_blue", 0.10, 0.40, 445, 30, 0, 0, 0},
      {"moderate_red", 0.08, 0.45, 625, 40, 0, 0, 0},
      {"purple", 0.06, 0.20, 440, 25, 0.20, 650, 40},
      {"yellow_green", 0.08, 0.40, 560, 45, 0, 0, 0},
      {"orange_yellow", 0.06, 0.45, 590, 40, 0, 0, 0},
      {"blue", 0.06, 0.35, 450, 22, 0, 0, 0},
      {"green", 0.06, 0.35, 525, 30, 0, 0, 0},
      {"red", 0.05, 0.50, 640, 35, 0, 0, 0},
      {"yellow", 0.08, 0.50, 580, 50, 0, 0, 0},
      {"magenta", 0.08, 0.30, 440, 28, 0.40, 640, 45},
      {"cyan", 0.08, 0.35, 480, 35, 0, 0, 0},
      {"white", 0.90, 0, 0, 0, 0, 0, 0},
      {"neutral_8", 0.70, 0, 0, 0, 0, 0, 0},
      {"neutral_65", 0.55, 0, 0, 0, 0, 0, 0},
      {"neutral_5", 0.40, 0, 0, 0, 0, 0, 0},
      {"neutral_35", 0.25, 0, 0, 0, 0, 0, 0},
      {"black", 0.12, 0, 0, 0, 0, 0, 0},
  }};
  return specs;
}

inline void fill_spectrum(Scene& scene, int x, int y,
                          const SpectralCurve& c) {
  for (int j = 0; j < scene.grid.count; ++j)
    scene.reflectance.at(x, y, j) = static_cast<float>(c[j]);
}

inline void slanted_plane_depth(Scene& scene, double z0, double gx,
                                double gy) {
  for (int y = 0; y < scene.height; ++y)
    for (int x = 0; x < scene.width; ++x) {
      double u = scene.width > 1 ? double(x) / (scene.width - 1) - 0.5 : 0.0;
      double v = scene.height > 1 ? double(y) / (scene.height - 1) - 0.5 : 0.0;
      scene.depth.at(x, y) = static_cast<float>(z0 + gx * u + gy * v);
    }
}

}  // namespace detail

/// 24-patch color-target scene on a slightly slanted plane around z0.
/// Layout: 6x4 grid of patches with a neutral gutter.
inline Scene make_colorchecker_scene(const WavelengthGrid& grid, int size = 64,
                                     double z0 = 400.0) {
  Scene scene(size, size, grid);
  detail::slanted_plane_depth(scene, z0, 30.0, 15.0);
  SpectralCurve gutter(grid, 0.3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) detail::fill_spectrum(scene, x, y, gutter);

  const auto& specs = detail::checker_specs();
  const int cols = 6, rows = 4;
  const int cw = size / cols, ch = size / rows;
  const int mx = (size - cols * cw) / 2, my = (size - rows * ch) / 2;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const auto& ps = specs[size_t(r * cols + c)];
      SpectralCurve curve = detail::patch_curve(ps, grid);
      int x0 = mx + c * cw + 1, x1 = mx + (c + 1) * cw - 1;
      int y0 = my + r * ch + 1, y1 = my + (r + 1) * ch - 1;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) detail::fill_spectrum(scene, x, y, curve);
      scene.patches.push_back({ps.name, x0, y0, x1, y1});
    }
  scene.validate();
  return scene;
}

/// Nine 10 nm boxcar reflectances (two adjacent unit samples on the 5 nm
/// grid) over a 3x3 patch layout; mimics imaging through bandpass filters.
inline Scene make_filter_scene(const WavelengthGrid& grid, int size = 64,
                               double z0 = 400.0) {
  Scene scene(size, size, grid);
  detail::slanted_plane_depth(scene, z0, 20.0, 10.0);
  SpectralCurve gutter(grid, 0.3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) detail::fill_spectrum(scene, x, y, gutter);

  static const double centers[9] = {447.5, 472.5, 497.5, 522.5, 547.5,
                                    572.5, 597.5, 622.5, 647.5};
  const int cells = 3, cw = size / cells;
  for (int r = 0; r < cells; ++r)
    for (int c = 0; c < cells; ++c) {
      double center = centers[r * cells + c];
      std::vector<double> v(static_cast<size_t>(grid.count), 0.03);
      for (int j = 0; j < grid.count; ++j)
        if (std::abs(grid.wavelength(j) - center) < 5.0) v[size_t(j)] = 1.0;
      SpectralCurve curve(grid, std::move(v));
      int x0 = c * cw + 2, x1 = (c + 1) * cw - 2;
      int y0 = r * cw + 2, y1 = (r + 1) * cw - 2;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) detail::fill_spectrum(scene, x, y, curve);
      char name[16];
      std::snprintf(name, sizeof name, "band_%03d", int(center));
      scene.patches.push_back({name, x0, y0, x1, y1});
    }
  scene.validate();
  return scene;
}

/// Two raised boxes over a background plane; relative-depth demo.
inline Scene make_twobox_scene(const WavelengthGrid& grid, int size = 64,
                               double z_back = 430.0) {
  Scene scene(size, size, grid);
  detail::slanted_plane_depth(scene, z_back, 0.0, 0.0);
  SpectralCurve back(grid, 0.5);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) detail::fill_spectrum(scene, x, y, back);

  auto box = [&](const char* name, int x0, int y0, int x1, int y1, double z,
                 const detail::PatchSpec& ps) {
    SpectralCurve curve = detail::patch_curve(ps, grid);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        scene.depth.at(x, y) = static_cast<float>(z);
        detail::fill_spectrum(scene, x, y, curve);
      }
    scene.patches.push_back({name, x0, y0, x1, y1});
  };
  int q = size / 4;
  box("box_near", q / 2, q, q / 2 + q, size - q, z_back - 50.0,
      detail::checker_specs()[8]);  // red-ish
  box("box_far", size - q / 2 - q, q, size - q / 2, size - q, z_back - 25.0,
      detail::checker_specs()[5]);  // green-ish
  scene.validate();
  return scene;
}

/// Flat plane with constant reflectance (calibration target).
inline Scene make_plane_scene(int width, int height,
                              const WavelengthGrid& grid, double z,
                              double reflectance = 0.99) {
  Scene scene(width, height, grid);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      scene.depth.at(x, y) = static_cast<float>(z);
      for (int j = 0; j < grid.count; ++j)
        scene.reflectance.at(x, y, j) = static_cast<float>(reflectance);
    }
  scene.validate();
  return scene;
}

/// Flat plane with a smooth random reflectance per pixel (noise-sweep
/// target). Deterministic in the seed.
inline Scene make_random_plane_scene(int width, int height,
                                     const WavelengthGrid& grid, double z,
                                     std::uint64_t seed) {
  Scene scene(width, height, grid);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      scene.depth.at(x, y) = static_cast<float>(z);
      double base = rng::uniform(seed, 1, x, y, 0, 0.05, 0.55);
      double amp = rng::uniform(seed, 2, x, y, 0, 0.0, 0.45);
      double mu = rng::uniform(seed, 3, x, y, 0, 430.0, 660.0);
      double sig = rng::uniform(seed, 4, x, y, 0, 20.0, 80.0);
      for (int j = 0; j < grid.count; ++j) {
        double d = (grid.wavelength(j) - mu) / sig;
        double v = std::clamp(base + amp * std::exp(-0.5 * d * d), 0.02, 1.0);
        scene.reflectance.at(x, y, j) = static_cast<float>(v);
      }
    }
  scene.validate();
  return scene;
}

}  // namespace dsl

#endif  // DSL_DEMO_HPP
