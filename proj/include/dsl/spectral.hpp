// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef DSL_SPECTRAL_HPP
#define DSL_SPECTRAL_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "dsl/common.hpp"
#include "dsl/image.hpp"

namespace dsl {

/// Evenly spaced, ascending wavelength axis in nanometers.
struct WavelengthGrid {
  double start_nm = 430.0;
  double end_nm = 660.0;
  double step_nm = 5.0;
  int count = 47;

  WavelengthGrid() = default;
  WavelengthGrid(double start, double end, double step)
      : start_nm(start), end_nm(end), step_nm(step) {
    detail::require(step > 0.0, "wavelength step must be positive");
    detail::require(end >= start, "wavelength grid must ascend");
    count = static_cast<int>(std::llround((end - start) / step)) + 1;
    detail::require(std::abs(start + (count - 1) * step - end) < 1e-9 * step,
                    "grid endpoints must be an integer number of steps apart");
  }

  /// The 47-sample axis used throughout: 430..660 nm at 5 nm.
  static WavelengthGrid standard() { return WavelengthGrid(430.0, 660.0, 5.0); }

  double wavelength(int i) const { return start_nm + step_nm * i; }

  /// Index of the grid sample nearest to nm.
  int nearest_index(double nm) const {
    int i = static_cast<int>(std::llround((nm - start_nm) / step_nm));
    return std::clamp(i, 0, count - 1);
  }

  bool operator==(const WavelengthGrid& o) const {
    return count == o.count && std::abs(start_nm - o.start_nm) < 1e-9 &&
           std::abs(step_nm - o.step_nm) < 1e-9;
  }
  bool operator!=(const WavelengthGrid& o) const { return !(*this == o); }
};

/// A function sampled on a WavelengthGrid (reflectance, response, efficiency).
struct SpectralCurve {
  WavelengthGrid grid;
  std::vector<double> values;

  SpectralCurve() : values(static_cast<size_t>(grid.count), 0.0) {}
  SpectralCurve(const WavelengthGrid& g, std::vector<double> v)
      : grid(g), values(std::move(v)) {
    detail::require(values.size() == static_cast<size_t>(grid.count),
                    "curve length must equal grid count");
    for (double x : values)
      detail::require(std::isfinite(x), "curve values must be finite");
  }
  SpectralCurve(const WavelengthGrid& g, double constant)
      : grid(g), values(static_cast<size_t>(g.count), constant) {
    detail::require(std::isfinite(constant), "curve values must be finite");
  }

  double operator[](int i) const { return values[static_cast<size_t>(i)]; }
  double& operator[](int i) { return values[static_cast<size_t>(i)]; }

  /// Linear interpolation at an arbitrary wavelength; clamps outside the grid.
  double sample(double nm) const {
    if (grid.count == 1) return values[0];
    double t = (nm - grid.start_nm) / grid.step_nm;
    if (t <= 0.0) return values.front();
    if (t >= grid.count - 1) return values.back();
    int i = static_cast<int>(t);
    double f = t - i;
    return values[i] * (1.0 - f) + values[i + 1] * f;
  }
};

/// Resamples onto target by linear interpolation, clamping beyond the source
/// range. Grids that do not overlap at all are rejected.
inline SpectralCurve resample(const SpectralCurve& curve,
                              const WavelengthGrid& target) {
  const WavelengthGrid& src = curve.grid;
  if (target.end_nm < src.start_nm || target.start_nm > src.end_nm)
    throw RangeError("resample: source and target grids are disjoint");
  std::vector<double> out(static_cast<size_t>(target.count));
  for (int i = 0; i < target.count; ++i)
    out[static_cast<size_t>(i)] = curve.sample(target.wavelength(i));
  return SpectralCurve(target, std::move(out));
}

/// Diffraction efficiency per order, sampled over the grid.
struct EfficiencySet {
  std::map<int, SpectralCurve> eta;

  bool has(int m) const { return eta.count(m) != 0; }
  const SpectralCurve& at(int m) const {
    auto it = eta.find(m);
    if (it == eta.end())
      throw DomainError("efficiency for order " + std::to_string(m) +
                        " not present");
    return it->second;
  }

  void validate() const {
    detail::require(has(0), "zero-order efficiency must be present");
    for (const auto& [m, curve] : eta) {
      detail::require(m >= -1 && m <= 1, "orders limited to {-1,0,1}");
      for (double x : curve.values)
        detail::require(x >= 0.0 && x <= 1.5,
                        "efficiency values must lie in [0, 1.5]");
    }
  }

  /// Shipped synthetic profile: flat eta_0 = 0.5, first orders ramping
  /// 0.05 -> 0.2 across the grid. Satisfies the decoding-margin inequality
  /// pointwise (0.5 > 0.2 + 0.2 at every wavelength).
  static EfficiencySet shipped_default(const WavelengthGrid& grid) {
    EfficiencySet s;
    s.eta.emplace(0, SpectralCurve(grid, 0.5));
    std::vector<double> ramp_up(static_cast<size_t>(grid.count));
    std::vector<double> ramp_dn(static_cast<size_t>(grid.count));
    for (int i = 0; i < grid.count; ++i) {
      double t = grid.count > 1 ? double(i) / (grid.count - 1) : 0.0;
      ramp_up[static_cast<size_t>(i)] = 0.05 + 0.15 * t;
      ramp_dn[static_cast<size_t>(i)] = 0.20 - 0.15 * t;
    }
    s.eta.emplace(1, SpectralCurve(grid, std::move(ramp_up)));
    s.eta.emplace(-1, SpectralCurve(grid, std::move(ramp_dn)));
    return s;
  }
};

/// Camera response and projector emission curves, channel order R, G, B.
struct ResponseSet {
  std::array<SpectralCurve, 3> cam;
  std::array<SpectralCurve, 3> proj;

  void validate() const {
    for (const auto& c : cam)
      for (double x : c.values)
        detail::require(x >= 0.0, "camera response must be non-negative");
    for (const auto& c : proj) {
      double total = 0.0;
      for (double x : c.values) {
        detail::require(x >= 0.0, "projector emission must be non-negative");
        total += x;
      }
      detail::require(total > 0.0,
                      "each emission curve must integrate to a positive value");
    }
  }

  /// Smooth synthetic three-bump curves standing in for measured ones.
  static ResponseSet shipped_default(const WavelengthGrid& grid) {
    auto bump = [&](double mu, double sigma, double amp) {
      std::vector<double> v(static_cast<size_t>(grid.count));
      for (int i = 0; i < grid.count; ++i) {
        double d = (grid.wavelength(i) - mu) / sigma;
        v[static_cast<size_t>(i)] = amp * std::exp(-0.5 * d * d);
      }
      return SpectralCurve(grid, std::move(v));
    };
    ResponseSet r;
    r.cam = {bump(615.0, 32.0, 1.0), bump(535.0, 32.0, 1.0),
             bump(460.0, 28.0, 1.0)};
    r.proj = {bump(620.0, 18.0, 1.0), bump(530.0, 25.0, 1.0),
              bump(455.0, 18.0, 1.0)};
    return r;
  }
};

/// Radiance emitted by a projector pixel at one wavelength:
/// L = sum_c proj_c(lambda) * P_c.
inline double emitted_radiance(const std::array<double, 3>& pattern_rgb,
                               const ResponseSet& responses, double lambda_nm) {
  for (double p : pattern_rgb)
    detail::require(p >= 0.0 && p <= 1.0, "pattern values must lie in [0,1]");
  double L = 0.0;
  for (int c = 0; c < 3; ++c)
    L += responses.proj[static_cast<size_t>(c)].sample(lambda_nm) *
         pattern_rgb[static_cast<size_t>(c)];
  return L;
}

/// Per-channel bounds on binary-code decoding:
/// on_min = what an on-pixel captures through the zero order alone,
/// off_max = the worst-case first-order leakage an off-pixel can capture.
/// Decoding by thresholding is safe iff margin(c) = on_min - off_max > 0.
struct DecodingMargin {
  std::array<double, 3> on_min{};
  std::array<double, 3> off_max{};
  double margin(int c) const {
    return on_min[static_cast<size_t>(c)] - off_max[static_cast<size_t>(c)];
  }
  double min_margin() const {
    return std::min({margin(0), margin(1), margin(2)});
  }
};

inline DecodingMargin decoding_margin(const SpectralCurve& H,
                                      const ResponseSet& responses,
                                      const EfficiencySet& eta) {
  const WavelengthGrid& grid = H.grid;
  for (const auto& c : responses.cam)
    detail::require(c.grid == grid, "curves must share the wavelength grid");
  DecodingMargin out;
  const SpectralCurve& eta0 = eta.at(0);
  const SpectralCurve* etap = eta.has(1) ? &eta.at(1) : nullptr;
  const SpectralCurve* etam = eta.has(-1) ? &eta.at(-1) : nullptr;
  for (int j = 0; j < grid.count; ++j) {
    double proj_sum = 0.0;
    for (int c = 0; c < 3; ++c) proj_sum += responses.proj[size_t(c)][j];
    double first = (etap ? (*etap)[j] : 0.0) + (etam ? (*etam)[j] : 0.0);
    for (int c = 0; c < 3; ++c) {
      double base = responses.cam[size_t(c)][j] * H[j] * proj_sum;
      out.on_min[size_t(c)] += base * eta0[j];
      out.off_max[size_t(c)] += base * first;
    }
  }
  return out;
}

/// Full width at half maximum in nm. Crossings are linearly interpolated,
/// scanning outward from the global peak so multi-modal curves report the
/// width of the dominant lobe. A half-max level never crossed on one side
/// clamps at the grid boundary.
inline double fwhm(const SpectralCurve& curve) {
  const auto& v = curve.values;
  const int n = curve.grid.count;
  int peak = 0;
  for (int i = 1; i < n; ++i)
    if (v[size_t(i)] > v[size_t(peak)]) peak = i;
  const double vp = v[size_t(peak)];
  if (!(vp > 0.0)) throw DomainError("fwhm undefined: curve has no positive peak");
  const double half = 0.5 * vp;
  const double step = curve.grid.step_nm;

  double left = curve.grid.start_nm;
  for (int i = peak - 1; i >= 0; --i) {
    if (v[size_t(i)] <= half) {
      double f = (half - v[size_t(i)]) / (v[size_t(i + 1)] - v[size_t(i)]);
      left = curve.grid.wavelength(i) + f * step;
      break;
    }
  }
  double right = curve.grid.end_nm;
  for (int i = peak + 1; i < n; ++i) {
    if (v[size_t(i)] <= half) {
      double f = (v[size_t(i - 1)] - half) / (v[size_t(i - 1)] - v[size_t(i)]);
      right = curve.grid.wavelength(i - 1) + f * step;
      break;
    }
  }
  return right - left;
}

/// Hyperspectral cube: row-major pixels, wavelength fastest.
struct SpectralCube {
  int width = 0;
  int height = 0;
  WavelengthGrid grid;
  std::vector<float> values;  // width*height*grid.count

  SpectralCube() = default;
  SpectralCube(int w, int h, const WavelengthGrid& g, float fill = 0.f)
      : width(w), height(h), grid(g),
        values(static_cast<size_t>(w) * static_cast<size_t>(h) *
                   static_cast<size_t>(g.count),
               fill) {
    detail::require(w > 0 && h > 0, "cube resolution must be positive");
  }

  size_t index(int x, int y, int j) const {
    return (static_cast<size_t>(y) * static_cast<size_t>(width) +
            static_cast<size_t>(x)) *
               static_cast<size_t>(grid.count) +
           static_cast<size_t>(j);
  }
  float at(int x, int y, int j) const { return values[index(x, y, j)]; }
  float& at(int x, int y, int j) { return values[index(x, y, j)]; }

  SpectralCurve curve_at(int x, int y) const {
    std::vector<double> v(static_cast<size_t>(grid.count));
    for (int j = 0; j < grid.count; ++j) v[size_t(j)] = at(x, y, j);
    return SpectralCurve(grid, std::move(v));
  }
};

namespace detail {

// Piecewise-Gaussian fits of the CIE 1931 color matching functions
// (Wyman, Sloan, Shirley, JCGT 2013). Good to a few percent, plenty for
// preview rendering.
inline double cmf_gauss(double x, double mu, double s1, double s2) {
  double t = (x - mu) * (x < mu ? 1.0 / s1 : 1.0 / s2);
  return std::exp(-0.5 * t * t);
}

inline std::array<double, 3> cmf_xyz(double nm) {
  double x = 1.056 * cmf_gauss(nm, 599.8, 37.9, 31.0) +
             0.362 * cmf_gauss(nm, 442.0, 16.0, 26.7) -
             0.065 * cmf_gauss(nm, 501.1, 20.4, 26.2);
  double y = 0.821 * cmf_gauss(nm, 568.8, 46.9, 40.5) +
             0.286 * cmf_gauss(nm, 530.9, 16.3, 31.1);
  double z = 1.217 * cmf_gauss(nm, 437.0, 11.8, 36.0) +
             0.681 * cmf_gauss(nm, 459.0, 26.0, 13.8);
  return {x, y, z};
}

}  // namespace detail

/// Fixed grid -> linear-RGB weighting table for previews. Rows are normalized
/// so a flat spectrum maps to neutral gray; colorimetric fidelity is a
/// non-goal.
inline std::array<std::vector<double>, 3> srgb_weights(
    const WavelengthGrid& grid) {
  // XYZ -> linear sRGB (D65)
  static constexpr double M[3][3] = {{3.2406, -1.5372, -0.4986},
                                     {-0.9689, 1.8758, 0.0415},
                                     {0.0557, -0.2040, 1.0570}};
  std::array<std::vector<double>, 3> w;
  for (auto& row : w) row.assign(static_cast<size_t>(grid.count), 0.0);
  for (int j = 0; j < grid.count; ++j) {
    auto xyz = detail::cmf_xyz(grid.wavelength(j));
    for (int c = 0; c < 3; ++c)
      w[size_t(c)][size_t(j)] =
          M[c][0] * xyz[0] + M[c][1] * xyz[1] + M[c][2] * xyz[2];
  }
  for (int c = 0; c < 3; ++c) {
    double total = 0.0;
    for (double x : w[size_t(c)]) total += x;
    detail::require(total > 0.0, "sRGB weight rows must sum positive");
    for (double& x : w[size_t(c)]) x /= total;
  }
  return w;
}

/// Preview conversion of a cube to RGB in [0,1].
inline Image to_srgb(const SpectralCube& cube) {
  auto w = srgb_weights(cube.grid);
  Image out(cube.width, cube.height);
  for (int y = 0; y < cube.height; ++y)
    for (int x = 0; x < cube.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int j = 0; j < cube.grid.count; ++j)
          acc += w[size_t(c)][size_t(j)] * cube.at(x, y, j);
        out.at(x, y, c) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
  return out;
}

}  // namespace dsl

#endif  // DSL_SPECTRAL_HPP
