// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef DSL_METRICS_HPP
#define DSL_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dsl/reconstruction.hpp"
#include "dsl/scene.hpp"
#include "dsl/spectral.hpp"

namespace dsl {

namespace detail {

// index-n/2 order statistic: deterministic and cheap, upper middle for even n
inline double median_of(std::vector<double> v) {
  auto mid = v.begin() + std::ptrdiff_t(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace detail

struct DepthErrorStats {
  int count = 0;
  double mean_abs = 0.0;   // mm
  double median_abs = 0.0;
  double rmse = 0.0;
};

/// Depth error over pixels valid in the estimate and defined in the truth;
/// an optional extra mask restricts further. An empty intersection throws.
inline DepthErrorStats depth_error(const DepthMap& est, const ImageGray& gt,
                                   const std::vector<std::uint8_t>* mask =
                                       nullptr) {
  detail::require(est.width == gt.width && est.height == gt.height,
                  "depth maps must match in size");
  if (mask)
    detail::require(mask->size() == est.valid.size(), "mask size mismatch");
  std::vector<double> errs;
  double sq = 0.0, abs_sum = 0.0;
  for (int y = 0; y < est.height; ++y)
    for (int x = 0; x < est.width; ++x) {
      const size_t k = est.pix(x, y);
      if (!est.valid[k] || !(gt.at(x, y) > 0.f)) continue;
      if (mask && !(*mask)[k]) continue;
      double e = double(est.z.at(x, y)) - double(gt.at(x, y));
      errs.push_back(std::abs(e));
      abs_sum += std::abs(e);
      sq += e * e;
    }
  if (errs.empty()) throw DomainError("no pixels to compare");
  DepthErrorStats s;
  s.count = int(errs.size());
  s.mean_abs = abs_sum / double(errs.size());
  s.rmse = std::sqrt(sq / double(errs.size()));
  s.median_abs = detail::median_of(std::move(errs));
  return s;
}

/// Root-mean-square difference across channels of one pixel's spectrum.
inline double spectral_rmse(const float* est, const float* gt, int n) {
  double sq = 0.0;
  for (int j = 0; j < n; ++j) {
    double d = double(est[j]) - double(gt[j]);
    sq += d * d;
  }
  return std::sqrt(sq / double(n));
}

/// Angle in degrees between two spectra; invariant to positive scaling.
/// Both zero: 0. Exactly one zero: 90.
inline double spectral_angle_deg(const float* est, const float* gt, int n) {
  double aa = 0.0, bb = 0.0, ab = 0.0;
  for (int j = 0; j < n; ++j) {
    aa += double(est[j]) * double(est[j]);
    bb += double(gt[j]) * double(gt[j]);
    ab += double(est[j]) * double(gt[j]);
  }
  if (aa == 0.0 && bb == 0.0) return 0.0;
  if (aa == 0.0 || bb == 0.0) return 90.0;
  double c = ab / std::sqrt(aa * bb);
  c = std::min(1.0, std::max(-1.0, c));
  return std::acos(c) * 180.0 / 3.14159265358979323846;
}

struct SpectralMetrics {
  int count = 0;
  double gt_peak = 0.0;  // max over the masked ground truth
  double mean_rmse = 0.0, median_rmse = 0.0, max_rmse = 0.0;
  double mean_angle_deg = 0.0, median_angle_deg = 0.0;
  std::vector<float> rmse_map;  // per pixel; negative where masked out

  /// Fraction of masked pixels whose RMSE is at or below the threshold.
  double fraction_rmse_below(double threshold) const {
    if (count == 0) return 0.0;
    int n = 0;
    for (float v : rmse_map)
      if (v >= 0.f && double(v) <= threshold) ++n;
    return double(n) / double(count);
  }
};

inline SpectralMetrics spectral_metrics(const SpectralCube& est,
                                        const SpectralCube& gt,
                                        const std::vector<std::uint8_t>& mask) {
  detail::require(est.width == gt.width && est.height == gt.height,
                  "cubes must match in size");
  detail::require(est.grid == gt.grid, "cubes must share a grid");
  detail::require(mask.size() == size_t(est.width) * size_t(est.height),
                  "mask size mismatch");
  const int n = est.grid.count;
  SpectralMetrics out;
  out.rmse_map.assign(mask.size(), -1.f);
  std::vector<double> rmses, angles;
  double rsum = 0.0, asum = 0.0;
  for (int y = 0; y < est.height; ++y)
    for (int x = 0; x < est.width; ++x) {
      const size_t k = size_t(y) * size_t(est.width) + size_t(x);
      if (!mask[k]) continue;
      const float* e = &est.values[k * size_t(n)];
      const float* g = &gt.values[k * size_t(n)];
      for (int j = 0; j < n; ++j)
        out.gt_peak = std::max(out.gt_peak, double(g[j]));
      double r = spectral_rmse(e, g, n);
      double a = spectral_angle_deg(e, g, n);
      out.rmse_map[k] = float(r);
      rmses.push_back(r);
      angles.push_back(a);
      rsum += r;
      asum += a;
      out.max_rmse = std::max(out.max_rmse, r);
    }
  if (rmses.empty()) throw DomainError("no pixels to compare");
  out.count = int(rmses.size());
  out.mean_rmse = rsum / double(rmses.size());
  out.mean_angle_deg = asum / double(angles.size());
  out.median_rmse = detail::median_of(std::move(rmses));
  out.median_angle_deg = detail::median_of(std::move(angles));
  return out;
}

struct FwhmRow {
  std::string name;
  double est_nm = std::numeric_limits<double>::quiet_NaN();
  double gt_nm = std::numeric_limits<double>::quiet_NaN();
};

/// Mean spectrum per named scene patch (restricted to masked pixels), then
/// full width at half maximum of estimate and truth. NaN where a patch has
/// no usable pixels or no positive peak.
inline std::vector<FwhmRow> fwhm_table(const SpectralCube& est,
                                       const Scene& scene,
                                       const std::vector<std::uint8_t>& mask) {
  detail::require(est.width == scene.width && est.height == scene.height,
                  "cube must match the scene");
  detail::require(est.grid == scene.grid, "cube must share the scene grid");
  const int n = est.grid.count;
  std::vector<FwhmRow> table;
  for (const auto& patch : scene.patches) {
    FwhmRow row;
    row.name = patch.name;
    std::vector<double> acc(size_t(n), 0.0), gt_acc(size_t(n), 0.0);
    int cnt = 0;
    for (int y = patch.y0; y < patch.y1; ++y)
      for (int x = patch.x0; x < patch.x1; ++x) {
        const size_t k = size_t(y) * size_t(est.width) + size_t(x);
        if (!mask[k]) continue;
        ++cnt;
        for (int j = 0; j < n; ++j) {
          acc[size_t(j)] += double(est.at(x, y, j));
          gt_acc[size_t(j)] += double(scene.reflectance.at(x, y, j));
        }
      }
    if (cnt > 0) {
      for (auto& v : acc) v /= double(cnt);
      for (auto& v : gt_acc) v /= double(cnt);
      try {
        row.est_nm = fwhm(SpectralCurve(est.grid, acc));
      } catch (const Error&) {
      }
      try {
        row.gt_nm = fwhm(SpectralCurve(est.grid, gt_acc));
      } catch (const Error&) {
      }
    }
    table.push_back(std::move(row));
  }
  return table;
}

}  // namespace dsl

#endif  // DSL_METRICS_HPP
