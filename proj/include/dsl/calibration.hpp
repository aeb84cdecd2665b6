// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef DSL_CALIBRATION_HPP
#define DSL_CALIBRATION_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dsl/correspondence.hpp"
#include "dsl/forward_sim.hpp"
#include "dsl/geometry.hpp"
#include "dsl/image.hpp"
#include "dsl/patterns.hpp"
#include "dsl/spectral.hpp"

namespace dsl {

/// 10 nm boxcar by default; a grid sample passes only when strictly inside
/// the band, so a band centered on a grid point passes exactly that sample.
inline SpectralCurve make_boxcar_bandpass(double center_nm, double width_nm,
                                          const WavelengthGrid& grid) {
  detail::require(width_nm > 0.0, "bandpass width must be positive");
  std::vector<double> v(size_t(grid.count), 0.0);
  for (int j = 0; j < grid.count; ++j)
    if (std::abs(grid.wavelength(j) - center_nm) < 0.5 * width_nm)
      v[size_t(j)] = 1.0;
  return SpectralCurve(grid, std::move(v));
}

/// Multiplies every pixel's reflectance by a filter curve sampled on the
/// scene grid, which is how a bandpass filter enters the simulation.
inline void apply_bandpass(Scene& scene, const SpectralCurve& filter) {
  SpectralCurve f = resample(filter, scene.grid);
  for (int y = 0; y < scene.height; ++y)
    for (int x = 0; x < scene.width; ++x)
      for (int j = 0; j < scene.grid.count; ++j)
        scene.reflectance.at(x, y, j) *= float(f.values[size_t(j)]);
}

/// A solid vertical bar occupying columns [x0, x0 + bar_width).
inline Pattern make_bar_pattern(int width, int height, int x0, int bar_width) {
  detail::require(width > 0 && height > 0, "pattern size must be positive");
  detail::require(bar_width > 0 && x0 >= 0 && x0 + bar_width <= width,
                  "bar must lie inside the pattern");
  Pattern p;
  p.width = width;
  p.height = height;
  p.kind = PatternKind::reference;
  p.index = 0;
  p.rgb.assign(size_t(width) * size_t(height) * 3, 0.f);
  for (int y = 0; y < height; ++y)
    for (int x = x0; x < x0 + bar_width; ++x)
      for (int c = 0; c < 3; ++c)
        p.rgb[(size_t(y) * size_t(width) + size_t(x)) * 3 + size_t(c)] = 1.f;
  return p;
}

namespace detail {

/// Forward trace: projector pixel -> grating -> order m at λ -> the plane at
/// world depth plane_z -> camera pixel.
inline std::optional<Eigen::Vector2d> trace_to_camera(
    const Eigen::Vector2d& q, int m, double lambda_nm, double plane_z,
    const Rig& rig) {
  try {
    Eigen::Vector3d g_world =
        unproject(q, rig.grating.plane_offset_mm, rig.projector);
    Eigen::Vector3d g_dev =
        rig.projector.rotation * g_world + rig.projector.translation;
    Eigen::Vector3d d_dev = diffract(g_dev.normalized(), m, lambda_nm,
                                     rig.grating.groove_density);
    Eigen::Vector3d d_world = rig.projector.rotation.transpose() * d_dev;
    if (d_world.z() <= 0.0) return std::nullopt;
    double t = (plane_z - g_world.z()) / d_world.z();
    if (t <= 0.0) return std::nullopt;
    return project(g_world + t * d_world, rig.camera);
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Diffraction efficiency estimation
// ---------------------------------------------------------------------------

/// One narrowband capture of a vertical bar, positioned so that the blob of
/// one diffraction order lands in the camera's view.
struct EtaCaptureSpec {
  double lambda_nm = 0.0;  // bandpass center
  int order = 0;           // the order this capture isolates
  int bar_x0 = 0;
};

struct EtaCalibrationSetup {
  Rig rig;
  double plane_z = 0.0;
  double target_reflectance = 0.99;
  double bandpass_width = 10.0;
  int bar_width = 5;
  std::vector<EtaCaptureSpec> captures;
  WavelengthGrid grid = WavelengthGrid::standard();
  double min_blob = 1e-9;  // blobs at or below this are unmeasurable

  void validate() const {
    rig.validate();
    detail::require(plane_z > 0.0, "plane depth must be positive");
    detail::require(target_reflectance > 0.0 && target_reflectance <= 1.0,
                    "target reflectance must be in (0, 1]");
    detail::require(!captures.empty(), "no calibration captures");
    for (const auto& c : captures) {
      detail::require(c.lambda_nm >= grid.start_nm && c.lambda_nm <= grid.end_nm,
                      "bandpass center outside the wavelength grid");
      detail::require(c.bar_x0 >= 0 &&
                          c.bar_x0 + bar_width <= rig.projector.width,
                      "bar outside the projector panel");
    }
  }
};

/// Plans one capture per (center, order): the bar is placed where that
/// order's blob lands at the camera's center pixel. Orders the solver cannot
/// reach at some wavelength simply get no capture there.
inline std::vector<EtaCaptureSpec> plan_eta_captures(
    const Rig& rig, const std::vector<double>& centers,
    const std::vector<int>& orders, double plane_z, int bar_width = 5) {
  std::vector<EtaCaptureSpec> specs;
  const Eigen::Vector2d center_px(0.5 * (rig.camera.width - 1),
                                  0.5 * (rig.camera.height - 1));
  const Eigen::Vector3d target = unproject(center_px, plane_z, rig.camera);
  for (double l : centers)
    for (int m : orders) {
      GratingSolution sol;
      try {
        sol = solve_grating_point(target, rig, m, l);
      } catch (const Error&) {
        continue;
      }
      int x0 = int(std::lround(sol.projector_px.x())) - bar_width / 2;
      if (x0 < 0 || x0 + bar_width > rig.projector.width) continue;
      specs.push_back({l, m, x0});
    }
  return specs;
}

struct EtaEstimate {
  EfficiencySet eta;  // eta[0] is identically 1
  std::vector<int> uncalibrated;
  // per order: (center, ratio) pairs actually measured
  std::map<int, std::vector<std::pair<double, double>>> ratios;
};

/// Recovers per-order diffraction efficiency ratios from narrowband bar
/// captures: blob intensity (mean above half max, distance-compensated)
/// relative to the zero-order blob at the same wavelength.
inline EtaEstimate estimate_eta(const std::vector<Image>& images,
                                const EtaCalibrationSetup& setup) {
  setup.validate();
  detail::require(images.size() == setup.captures.size(),
                  "one image per capture spec required");

  struct Blob {
    double value = 0.0;
    bool ok = false;
  };
  // (order, center) -> measurement
  std::map<std::pair<int, double>, Blob> blobs;

  const int W = setup.rig.camera.width, H = setup.rig.camera.height;
  for (size_t i = 0; i < images.size(); ++i) {
    const EtaCaptureSpec& cap = setup.captures[i];
    const Image& img = images[i];
    detail::require(img.width == W && img.height == H,
                    "capture resolution mismatch");

    // bounding box from tracing the bar's corners and midlines
    double bx0 = 1e300, bx1 = -1e300, by0 = 1e300, by1 = -1e300;
    bool any = false;
    for (int qx : {cap.bar_x0, cap.bar_x0 + setup.bar_width - 1})
      for (double qy : {0.0, 0.5 * (setup.rig.projector.height - 1),
                        double(setup.rig.projector.height - 1)}) {
        auto px = detail::trace_to_camera(Eigen::Vector2d(double(qx), qy),
                                          cap.order, cap.lambda_nm,
                                          setup.plane_z, setup.rig);
        if (!px) continue;
        any = true;
        bx0 = std::min(bx0, px->x());
        bx1 = std::max(bx1, px->x());
        by0 = std::min(by0, px->y());
        by1 = std::max(by1, px->y());
      }
    if (!any) continue;  // blob not in view
    const int margin = 3;
    int x0 = std::max(0, int(std::floor(bx0)) - margin);
    int x1 = std::min(W - 1, int(std::ceil(bx1)) + margin);
    int y0 = std::max(0, int(std::floor(by0)) - margin);
    int y1 = std::min(H - 1, int(std::ceil(by1)) + margin);
    if (x0 > x1 || y0 > y1) continue;

    auto level = [&](int x, int y) {
      return double(img.at(x, y, 0)) + double(img.at(x, y, 1)) +
             double(img.at(x, y, 2));
    };
    double vmax = 0.0;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) vmax = std::max(vmax, level(x, y));
    if (vmax <= setup.min_blob) continue;
    // distance-compensate per pixel so the ratio does not depend on which
    // exact pixels each order's blob happens to light
    double sum = 0.0;
    int n = 0;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (level(x, y) >= 0.5 * vmax) {
          double d = propagation_distance(
              Eigen::Vector2d(double(x), double(y)), setup.plane_z, setup.rig);
          sum += level(x, y) * d * d;
          ++n;
        }
    Blob b;
    b.value = sum / double(n);
    b.ok = true;
    blobs[{cap.order, cap.lambda_nm}] = b;
  }

  // collect the orders and centers actually requested
  std::vector<int> first_orders;
  std::vector<double> centers;
  for (const auto& c : setup.captures) {
    if (c.order != 0 &&
        std::find(first_orders.begin(), first_orders.end(), c.order) ==
            first_orders.end())
      first_orders.push_back(c.order);
    if (std::find(centers.begin(), centers.end(), c.lambda_nm) ==
        centers.end())
      centers.push_back(c.lambda_nm);
  }
  std::sort(first_orders.begin(), first_orders.end());
  std::sort(centers.begin(), centers.end());

  EtaEstimate out;
  for (int m : first_orders) {
    std::vector<std::pair<double, double>> pts;
    for (double l : centers) {
      auto it = blobs.find({m, l});
      if (it == blobs.end() || !it->second.ok) continue;
      auto z = blobs.find({0, l});
      if (z == blobs.end() || !z->second.ok || z->second.value <= 0.0)
        throw CalibrationError(
            "zero-order blob unmeasurable at a calibrated wavelength");
      pts.emplace_back(l, it->second.value / z->second.value);
    }
    if (pts.empty()) {
      out.uncalibrated.push_back(m);
      continue;
    }
    out.ratios[m] = pts;
    std::vector<double> v(size_t(setup.grid.count));
    for (int j = 0; j < setup.grid.count; ++j) {
      double l = setup.grid.wavelength(j);
      if (l <= pts.front().first) {
        v[size_t(j)] = pts.front().second;
      } else if (l >= pts.back().first) {
        v[size_t(j)] = pts.back().second;
      } else {
        size_t k = 0;
        while (k + 1 < pts.size() && pts[k + 1].first < l) ++k;
        double t = (l - pts[k].first) / (pts[k + 1].first - pts[k].first);
        v[size_t(j)] =
            (1.0 - t) * pts[k].second + t * pts[k + 1].second;
      }
      v[size_t(j)] = std::max(0.0, v[size_t(j)]);
    }
    out.eta.eta.emplace(m, SpectralCurve(setup.grid, std::move(v)));
  }
  out.eta.eta.emplace(
      0, SpectralCurve(setup.grid,
                       std::vector<double>(size_t(setup.grid.count), 1.0)));
  return out;
}

// ---------------------------------------------------------------------------
// Response refinement
// ---------------------------------------------------------------------------

/// Intensities of one known patch, per diffraction order and camera channel,
/// captured under full-white illumination.
struct PatchObservation {
  SpectralCurve reflectance;  // ground-truth patch spectrum
  double geom_scale = 1.0;    // lumped exposure and inverse-square factor
  std::vector<std::array<double, 3>> intensity;  // [order index][channel]
};

struct RefineOptions {
  int max_iters = 5000;
  double smooth_w = 0.005;  // weight of the response-gradient penalty
  double step = 1e-3;
  double tol = 1e-12;  // relative objective decrease
  int max_halvings = 40;
};

struct RefineResult {
  ResponseSet responses;
  double loss = 0.0;       // total objective at exit
  double data_loss = 0.0;  // without the smoothness term
  int iterations = 0;
  bool converged = false;
  bool failed = false;  // step halving bottomed out
};

/// Gradient descent on camera and projector response curves against known
/// patch spectra, with a curve-smoothness penalty and a non-negativity
/// projection. The accepted iterates never increase the objective.
inline RefineResult refine_responses(const ResponseSet& init,
                                     const std::vector<PatchObservation>& obs,
                                     const std::vector<int>& orders,
                                     const EfficiencySet& eta,
                                     const WavelengthGrid& grid,
                                     const RefineOptions& opt = {}) {
  init.validate();
  detail::require(!obs.empty(), "no patch observations");
  const int n = grid.count;
  const size_t no = orders.size();
  for (const auto& o : obs)
    detail::require(o.intensity.size() == no,
                    "each observation needs one intensity row per order");

  std::vector<std::vector<double>> eta_tab(no);
  for (size_t oi = 0; oi < no; ++oi)
    eta_tab[oi] = resample(eta.at(orders[oi]), grid).values;

  // a[p][oi][j] = geom * H[j] * eta[j]: fixed throughout
  std::vector<std::vector<std::vector<double>>> a(obs.size());
  double sum_i2 = 0.0;
  for (size_t p = 0; p < obs.size(); ++p) {
    SpectralCurve h = resample(obs[p].reflectance, grid);
    a[p].resize(no, std::vector<double>(size_t(n)));
    for (size_t oi = 0; oi < no; ++oi)
      for (int j = 0; j < n; ++j)
        a[p][oi][size_t(j)] =
            obs[p].geom_scale * h.values[size_t(j)] * eta_tab[oi][size_t(j)];
    for (size_t oi = 0; oi < no; ++oi)
      for (int c = 0; c < 3; ++c)
        sum_i2 += obs[p].intensity[oi][size_t(c)] *
                  obs[p].intensity[oi][size_t(c)];
  }

  using Curves = std::array<Eigen::VectorXd, 6>;  // cam rgb then proj rgb
  Curves r;
  for (int c = 0; c < 3; ++c) {
    auto cv = resample(init.cam[size_t(c)], grid).values;
    auto pv = resample(init.proj[size_t(c)], grid).values;
    r[size_t(c)] = Eigen::Map<Eigen::VectorXd>(cv.data(), n);
    r[size_t(c) + 3] = Eigen::Map<Eigen::VectorXd>(pv.data(), n);
  }

  auto data_loss = [&](const Curves& q, std::vector<double>* resid) {
    if (resid) resid->assign(obs.size() * no * 3, 0.0);
    Eigen::VectorXd L = q[3] + q[4] + q[5];
    double loss = 0.0;
    size_t ri = 0;
    for (size_t p = 0; p < obs.size(); ++p)
      for (size_t oi = 0; oi < no; ++oi)
        for (int c = 0; c < 3; ++c, ++ri) {
          double pred = 0.0;
          for (int j = 0; j < n; ++j)
            pred += q[size_t(c)](j) * a[p][oi][size_t(j)] * L(j);
          double d = pred - obs[p].intensity[oi][size_t(c)];
          if (resid) (*resid)[ri] = d;
          loss += d * d;
        }
    return loss;
  };
  auto smooth_loss = [&](const Curves& q) {
    double s = 0.0;
    for (const auto& c : q)
      for (int j = 0; j + 1 < n; ++j) {
        double d = c(j + 1) - c(j);
        s += d * d;
      }
    return opt.smooth_w * s;
  };

  RefineResult res;
  std::vector<double> resid;
  double dl = data_loss(r, &resid);
  double loss = dl + smooth_loss(r);
  double step = opt.step;
  const double data_floor = 1e-24 * std::max(1.0, sum_i2);

  for (int it = 0; it < opt.max_iters; ++it) {
    if (dl <= data_floor) {
      res.converged = true;
      break;
    }
    // gradients
    Curves grad;
    for (auto& g : grad) g = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd L = r[3] + r[4] + r[5];
    size_t ri = 0;
    for (size_t p = 0; p < obs.size(); ++p)
      for (size_t oi = 0; oi < no; ++oi)
        for (int c = 0; c < 3; ++c, ++ri) {
          const double two_r = 2.0 * resid[ri];
          if (two_r == 0.0) continue;
          for (int j = 0; j < n; ++j) {
            const double aj = a[p][oi][size_t(j)];
            grad[size_t(c)](j) += two_r * aj * L(j);
            const double common = two_r * r[size_t(c)](j) * aj;
            grad[3](j) += common;
            grad[4](j) += common;
            grad[5](j) += common;
          }
        }
    for (size_t q = 0; q < 6; ++q)
      for (int j = 0; j < n; ++j) {
        double g = 0.0;
        if (j > 0) g += r[q](j) - r[q](j - 1);
        if (j + 1 < n) g -= r[q](j + 1) - r[q](j);
        grad[q](j) += 2.0 * opt.smooth_w * g;
      }

    // backtracking step with non-negativity projection
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h) {
      Curves cand;
      for (size_t q = 0; q < 6; ++q)
        cand[q] = (r[q] - step * grad[q]).cwiseMax(0.0);
      std::vector<double> cand_resid;
      double cdl = data_loss(cand, &cand_resid);
      double closs = cdl + smooth_loss(cand);
      if (closs <= loss) {
        double prev = loss;
        r = std::move(cand);
        resid = std::move(cand_resid);
        dl = cdl;
        loss = closs;
        res.iterations = it + 1;
        accepted = true;
        if (std::abs(prev - loss) <= opt.tol * std::max(1.0, prev))
          res.converged = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.failed = true;
      break;
    }
    if (res.converged) break;
    step = std::min(step * 1.2, 1.0);
  }

  for (int c = 0; c < 3; ++c) {
    res.responses.cam[size_t(c)] = SpectralCurve(
        grid, std::vector<double>(r[size_t(c)].data(),
                                  r[size_t(c)].data() + n));
    res.responses.proj[size_t(c)] = SpectralCurve(
        grid, std::vector<double>(r[size_t(c) + 3].data(),
                                  r[size_t(c) + 3].data() + n));
  }
  res.loss = loss;
  res.data_loss = dl;
  return res;
}

// ---------------------------------------------------------------------------
// Correspondence sample extraction
// ---------------------------------------------------------------------------

struct ExtractSetup {
  double lambda_nm = 0.0;  // bandpass center of this stack
  double plane_z = 0.0;    // known flat-target depth
  std::vector<std::array<int, 2>> pixels;
  double peak_ratio = 3.0;  // peaks must exceed ratio * trace median
  int min_separation = 0;   // 0: use the scanline width
  int expected_peaks = 0;   // 0: accept any number
};

struct ExtractDiagnostics {
  int skipped_dark = 0;
  int skipped_few_peaks = 0;
  int extra_peaks = 0;
};

/// Walks each requested pixel's intensity trace across a scanline stack,
/// finds illumination peaks, labels them by order (tallest is the zero
/// order; a lower frame index than the zero order means m=-1), and converts
/// peak frame indices to projector columns.
inline std::vector<CorrespondenceSample> extract_correspondence_samples(
    const CaptureStack& stack, const ExtractSetup& setup,
    ExtractDiagnostics* diag = nullptr) {
  stack.validate();
  detail::require(stack.patterns.kind == PatternKind::scanline,
                  "sample extraction expects a scanline stack");
  detail::require(setup.plane_z > 0.0, "plane depth must be positive");
  const ScanlineSpec& scan = stack.patterns.scan;
  const int K = stack.patterns.size();
  const int min_sep =
      setup.min_separation > 0 ? setup.min_separation : scan.line_width;

  ExtractDiagnostics local;
  std::vector<CorrespondenceSample> out;
  std::vector<double> trace(static_cast<size_t>(K));
  std::vector<double> sorted(static_cast<size_t>(K));

  for (const auto& pxy : setup.pixels) {
    const int x = pxy[0], y = pxy[1];
    detail::require(x >= 0 && x < stack.width && y >= 0 && y < stack.height,
                    "sample pixel outside the capture");
    double vmax = 0.0;
    for (int i = 0; i < K; ++i) {
      const Image& f = stack.frames[size_t(i)];
      trace[size_t(i)] = (double(f.at(x, y, 0)) + double(f.at(x, y, 1)) +
                          double(f.at(x, y, 2))) /
                         3.0;
      vmax = std::max(vmax, trace[size_t(i)]);
    }
    if (vmax <= 0.0) {
      ++local.skipped_dark;
      continue;
    }
    sorted = trace;
    std::nth_element(sorted.begin(), sorted.begin() + K / 2, sorted.end());
    const double median = sorted[size_t(K / 2)];
    const double thr = std::max(setup.peak_ratio * median, 1e-3 * vmax);

    struct Cluster {
      double centroid = 0.0, height = 0.0, mass = 0.0;
      int last = -1;
    };
    std::vector<Cluster> clusters;
    for (int i = 0; i < K; ++i) {
      if (!(trace[size_t(i)] > thr)) continue;
      if (clusters.empty() || i - clusters.back().last >= min_sep)
        clusters.push_back({});
      Cluster& c = clusters.back();
      c.centroid += double(i) * trace[size_t(i)];
      c.mass += trace[size_t(i)];
      c.height = std::max(c.height, trace[size_t(i)]);
      c.last = i;
    }
    for (auto& c : clusters) c.centroid /= c.mass;

    if (clusters.empty()) {
      ++local.skipped_dark;
      continue;
    }
    if (setup.expected_peaks > 0 &&
        int(clusters.size()) < setup.expected_peaks) {
      ++local.skipped_few_peaks;
      continue;
    }
    size_t zi = 0;
    for (size_t c = 1; c < clusters.size(); ++c)
      if (clusters[c].height > clusters[zi].height) zi = c;
    // strongest secondary on each side of the zero order
    int lo = -1, hi = -1;
    for (size_t c = 0; c < clusters.size(); ++c) {
      if (c == zi) continue;
      if (clusters[c].centroid < clusters[zi].centroid) {
        if (lo < 0 || clusters[c].height > clusters[size_t(lo)].height)
          lo = int(c);
      } else {
        if (hi < 0 || clusters[c].height > clusters[size_t(hi)].height)
          hi = int(c);
      }
    }
    int used = 1 + (lo >= 0 ? 1 : 0) + (hi >= 0 ? 1 : 0);
    local.extra_peaks += int(clusters.size()) - used;

    auto emit = [&](const Cluster& c, int m) {
      CorrespondenceSample s;
      s.px = double(x);
      s.py = double(y);
      s.z = setup.plane_z;
      s.m = m;
      s.lambda = setup.lambda_nm;
      s.q_col = scan.shift * c.centroid + 0.5 * (scan.line_width - 1);
      out.push_back(s);
    };
    if (lo >= 0) emit(clusters[size_t(lo)], -1);
    emit(clusters[zi], 0);
    if (hi >= 0) emit(clusters[size_t(hi)], +1);
  }
  if (diag) *diag = local;
  return out;
}

}  // namespace dsl

#endif  // DSL_CALIBRATION_HPP
