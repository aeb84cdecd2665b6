// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef DSL_CORRESPONDENCE_HPP
#define DSL_CORRESPONDENCE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "dsl/common.hpp"
#include "dsl/geometry.hpp"
#include "dsl/patterns.hpp"

namespace dsl {

/// Achromatic camera-pixel -> projector-pixel map at a known depth.
inline Eigen::Vector2d zero_order(const Eigen::Vector2d& p, double z,
                                  const Rig& rig) {
  return project(unproject(p, z, rig.camera), rig.projector);
}

// ---------------------------------------------------------------------------
// Power-law depth model q = alpha * z^beta + gamma
// ---------------------------------------------------------------------------

struct PowerLawFit {
  double alpha = 0.0;
  double beta = 1.0;
  double gamma = 0.0;
  double rms_residual = 0.0;
  bool converged = false;
  bool valid = false;  // a fit was attempted and produced finite coefficients

  double eval(double z) const { return alpha * std::pow(z, beta) + gamma; }
};

struct PowerLawOptions {
  double beta_min = -8.0;
  double beta_max = 8.0;
  int beta_grid = 161;
  int polish_iters = 60;
  double tol = 1e-13;
};

namespace detail {

// Least-squares (alpha, gamma) for fixed beta, returning the rss.
inline double profile_rss(std::span<const double> z, std::span<const double> q,
                          double beta, double* alpha, double* gamma) {
  const size_t n = z.size();
  double st = 0, sq = 0, stt = 0, stq = 0;
  for (size_t i = 0; i < n; ++i) {
    double t = std::pow(z[i], beta);
    st += t;
    sq += q[i];
    stt += t * t;
    stq += t * q[i];
  }
  double denom = stt - st * st / double(n);
  double a, g;
  if (!(denom > 1e-300 * stt) || !std::isfinite(denom)) {
    a = 0.0;
    g = sq / double(n);
  } else {
    a = (stq - st * sq / double(n)) / denom;
    g = (sq - a * st) / double(n);
  }
  double rss = 0;
  for (size_t i = 0; i < n; ++i) {
    double r = q[i] - a * std::pow(z[i], beta) - g;
    rss += r * r;
  }
  if (alpha) *alpha = a;
  if (gamma) *gamma = g;
  return std::isfinite(rss) ? rss : std::numeric_limits<double>::max();
}

}  // namespace detail

/// Fits q = alpha*z^beta + gamma to depth samples by profiling beta (grid +
/// golden section) and polishing with damped Gauss-Newton. Non-convergence
/// is reported in the result, which carries the best parameters found.
inline PowerLawFit fit_power_law(std::span<const double> z,
                                 std::span<const double> q,
                                 const PowerLawOptions& opt = {}) {
  detail::require(z.size() == q.size(), "sample arrays must match");
  detail::require(z.size() >= 4, "need at least 4 depth samples");
  {
    std::vector<double> zs(z.begin(), z.end());
    std::sort(zs.begin(), zs.end());
    for (size_t i = 1; i < zs.size(); ++i)
      detail::require(zs[i] > zs[i - 1], "depth samples must be distinct");
    detail::require(zs.front() > 0.0, "depths must be positive");
  }
  const size_t n = z.size();

  PowerLawFit fit;
  fit.valid = true;

  // Degenerate constant series: beta is unidentifiable, pick the exact
  // constant solution.
  double qmin = q[0], qmax = q[0];
  for (double v : q) {
    qmin = std::min(qmin, v);
    qmax = std::max(qmax, v);
  }
  if (qmax - qmin <= 1e-12 * std::max(1.0, std::abs(qmax))) {
    fit.alpha = 0.0;
    fit.beta = 1.0;
    double s = 0;
    for (double v : q) s += v;
    fit.gamma = s / double(n);
    fit.rms_residual = 0.0;
    fit.converged = true;
    return fit;
  }

  // Coarse profile over beta.
  double best_beta = 1.0, best_rss = std::numeric_limits<double>::max();
  for (int i = 0; i < opt.beta_grid; ++i) {
    double b = opt.beta_min +
               (opt.beta_max - opt.beta_min) * double(i) / (opt.beta_grid - 1);
    double rss = detail::profile_rss(z, q, b, nullptr, nullptr);
    if (rss < best_rss) {
      best_rss = rss;
      best_beta = b;
    }
  }
  // Golden-section refinement around the best grid cell.
  {
    double step = (opt.beta_max - opt.beta_min) / (opt.beta_grid - 1);
    double a = best_beta - step, b = best_beta + step;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = detail::profile_rss(z, q, x1, nullptr, nullptr);
    double f2 = detail::profile_rss(z, q, x2, nullptr, nullptr);
    for (int it = 0; it < 90 && b - a > 1e-14 * (1.0 + std::abs(b)); ++it) {
      if (f1 < f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - gr * (b - a);
        f1 = detail::profile_rss(z, q, x1, nullptr, nullptr);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + gr * (b - a);
        f2 = detail::profile_rss(z, q, x2, nullptr, nullptr);
      }
    }
    best_beta = 0.5 * (a + b);
  }
  best_rss =
      detail::profile_rss(z, q, best_beta, &fit.alpha, &fit.gamma);
  fit.beta = best_beta;

  // Damped Gauss-Newton polish over all three parameters.
  double rss = best_rss;
  bool small_step = false;
  for (int it = 0; it < opt.polish_iters; ++it) {
    Eigen::Matrix3d JtJ = Eigen::Matrix3d::Zero();
    Eigen::Vector3d Jtr = Eigen::Vector3d::Zero();
    for (size_t i = 0; i < n; ++i) {
      double t = std::pow(z[i], fit.beta);
      double r = q[i] - fit.alpha * t - fit.gamma;
      Eigen::Vector3d g(-t, -fit.alpha * std::log(z[i]) * t, -1.0);
      JtJ += g * g.transpose();
      Jtr += g * r;
    }
    JtJ.diagonal().array() += 1e-12 * (1.0 + JtJ.trace());
    Eigen::Vector3d delta = JtJ.ldlt().solve(-Jtr);
    if (!delta.allFinite()) break;
    double scale = 1.0;
    double a0 = fit.alpha, b0 = fit.beta, g0 = fit.gamma;
    bool accepted = false;
    for (int half = 0; half < 25; ++half) {
      fit.alpha = a0 + scale * delta(0);
      fit.beta = b0 + scale * delta(1);
      fit.gamma = g0 + scale * delta(2);
      double new_rss = 0;
      for (size_t i = 0; i < n; ++i) {
        double r = q[i] - fit.alpha * std::pow(z[i], fit.beta) - fit.gamma;
        new_rss += r * r;
      }
      if (std::isfinite(new_rss) && new_rss <= rss) {
        rss = new_rss;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) {
      fit.alpha = a0;
      fit.beta = b0;
      fit.gamma = g0;
      small_step = true;  // at a (numerical) minimum
      break;
    }
    double rel = std::abs(scale * delta(0)) / (1.0 + std::abs(fit.alpha)) +
                 std::abs(scale * delta(1)) / (1.0 + std::abs(fit.beta)) +
                 std::abs(scale * delta(2)) / (1.0 + std::abs(fit.gamma));
    if (rel < opt.tol) {
      small_step = true;
      break;
    }
  }
  fit.rms_residual = std::sqrt(rss / double(n));
  fit.converged = small_step || rss <= 1e-18 * double(n);
  return fit;
}

// ---------------------------------------------------------------------------
// Correspondence model
// ---------------------------------------------------------------------------

struct CorrespondenceSample {
  double px = 0, py = 0;
  double z = 0;
  int m = 0;
  double lambda = 0;
  double q_col = 0;
};

/// Lattice over which first-order correspondence is sampled and fitted.
struct SampleGrids {
  std::vector<double> pixel_xs;
  std::vector<double> pixel_ys;
  std::vector<double> lambdas;
  std::vector<double> depths;

  void validate() const {
    auto ascending = [](const std::vector<double>& v) {
      for (size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1])) return false;
      return !v.empty();
    };
    detail::require(ascending(pixel_xs) && ascending(pixel_ys) &&
                        ascending(lambdas) && ascending(depths),
                    "sample grids must be non-empty and ascending");
    detail::require(depths.size() >= 4, "need at least 4 depth samples");
  }

  /// Evenly spaced lattice helpers.
  static std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      v[size_t(i)] = n > 1 ? lo + (hi - lo) * double(i) / (n - 1) : lo;
    return v;
  }

  /// Defaults mirror the prototype protocol: 5 depths spanning 500-1000 mm,
  /// 7 wavelengths biased toward the red end, a 48x85 camera lattice.
  static SampleGrids defaults(int cam_width, int cam_height) {
    SampleGrids g;
    g.pixel_xs = linspace(0.0, cam_width - 1.0, std::min(48, cam_width));
    g.pixel_ys = linspace(0.0, cam_height - 1.0, std::min(85, cam_height));
    g.lambdas = {430, 600, 610, 620, 640, 650, 660};
    g.depths = {500, 625, 750, 875, 1000};
    return g;
  }
};

namespace detail {

// Weights of a cubic Hermite segment with central-difference slopes over
// knots x0..x3 (edge knots may repeat), evaluated at t in [x1, x2]. The
// interpolant is linear in the knot values, exact at the knots, and degrades
// to linear interpolation when only two distinct knots exist.
inline std::array<double, 4> cubic_weights(double x0, double x1, double x2,
                                           double x3, double t) {
  double h = x2 - x1;
  if (!(h > 0)) return {0.0, 1.0, 0.0, 0.0};
  double s = (t - x1) / h;
  double s2 = s * s, s3 = s2 * s;
  double h00 = 2 * s3 - 3 * s2 + 1;
  double h10 = s3 - 2 * s2 + s;
  double h01 = -2 * s3 + 3 * s2;
  double h11 = s3 - s2;
  double d1 = (x2 - x0) > 0 ? h * h10 / (x2 - x0) : 0.0;
  double d2 = (x3 - x1) > 0 ? h * h11 / (x3 - x1) : 0.0;
  return {-d1, h00 - d2, h01 + d1, d2};
}

// Bracketing index i with xs[i] <= t < xs[i+1], clamped to valid segments.
inline int segment_index(const std::vector<double>& xs, double t) {
  if (xs.size() < 2) return 0;
  int i = int(std::upper_bound(xs.begin(), xs.end(), t) - xs.begin()) - 1;
  return std::clamp(i, 0, int(xs.size()) - 2);
}

}  // namespace detail

struct QueryResult {
  double col = 0.0;
  bool clamped = false;
};

/// Bicubic lattice weights for one camera pixel: 4x4 node indices plus
/// separable weights. Fixed per pixel, independent of depth and wavelength.
struct LatticeWeights {
  std::array<int, 4> ix{}, iy{};
  std::array<double, 4> wx{}, wy{};
  bool clamped = false;
};

/// Fitted first-order correspondence: per (lattice node, wavelength knot,
/// order) power-law coefficients, evaluated at depth and interpolated
/// linearly in wavelength and bicubically across the camera lattice.
class CorrespondenceModel {
 public:
  SampleGrids grids;
  int projector_width = 0;
  std::vector<int> orders;                      // e.g. {-1, +1}
  std::vector<std::vector<PowerLawFit>> coefs;  // [order][(iy*nx+ix)*nl+il]

  // Hull clamp margins for query.
  double z_margin_frac = 0.15;
  double lambda_margin_nm = 5.0;
  double pixel_margin_cells = 1.0;

  bool has_order(int m) const {
    return std::find(orders.begin(), orders.end(), m) != orders.end();
  }
  int order_index(int m) const {
    for (size_t i = 0; i < orders.size(); ++i)
      if (orders[i] == m) return int(i);
    throw DomainError("order not modeled");
  }
  const PowerLawFit& fit_at(int m, int ix, int iy, int il) const {
    size_t nx = grids.pixel_xs.size(), nl = grids.lambdas.size();
    return coefs[size_t(order_index(m))][(size_t(iy) * nx + size_t(ix)) * nl +
                                         size_t(il)];
  }

  /// Depth clamped into the hull; beyond the margin it is rejected.
  double clamp_depth(double z, bool* clamped) const {
    double zlo = grids.depths.front(), zhi = grids.depths.back();
    double margin = z_margin_frac * (zhi - zlo);
    if (z < zlo - margin || z > zhi + margin)
      throw RangeError("depth outside the correspondence model hull");
    if (z < zlo || z > zhi) {
      if (clamped) *clamped = true;
      return std::clamp(z, zlo, zhi);
    }
    return z;
  }

  LatticeWeights lattice_weights(const Eigen::Vector2d& p) const {
    LatticeWeights lw;
    auto axis = [&](const std::vector<double>& xs, double v,
                    std::array<int, 4>& idx, std::array<double, 4>& w) {
      double lo = xs.front(), hi = xs.back();
      double cell = xs.size() > 1 ? (hi - lo) / double(xs.size() - 1) : 1.0;
      double margin = pixel_margin_cells * cell;
      if (v < lo - margin || v > hi + margin)
        throw RangeError("pixel outside the correspondence model hull");
      if (v < lo || v > hi) {
        lw.clamped = true;
        v = std::clamp(v, lo, hi);
      }
      int n = int(xs.size());
      if (n == 1) {
        idx = {0, 0, 0, 0};
        w = {0.0, 1.0, 0.0, 0.0};
        return;
      }
      int i = detail::segment_index(xs, v);
      for (int k = 0; k < 4; ++k) idx[size_t(k)] = std::clamp(i - 1 + k, 0, n - 1);
      w = detail::cubic_weights(xs[size_t(idx[0])], xs[size_t(idx[1])],
                                xs[size_t(idx[2])], xs[size_t(idx[3])], v);
    };
    axis(grids.pixel_xs, p.x(), lw.ix, lw.wx);
    axis(grids.pixel_ys, p.y(), lw.iy, lw.wy);
    return lw;
  }

  /// Column at wavelength knot il for order m, depth already inside the hull.
  double knot_column(const LatticeWeights& lw, double z, int m, int il) const {
    const auto& fits = coefs[size_t(order_index(m))];
    const size_t nx = grids.pixel_xs.size(), nl = grids.lambdas.size();
    double col = 0.0;
    for (int ky = 0; ky < 4; ++ky) {
      double wy = lw.wy[size_t(ky)];
      if (wy == 0.0) continue;
      double row = 0.0;
      for (int kx = 0; kx < 4; ++kx) {
        double wx = lw.wx[size_t(kx)];
        if (wx == 0.0) continue;
        const PowerLawFit& f =
            fits[(size_t(lw.iy[size_t(ky)]) * nx + size_t(lw.ix[size_t(kx)])) *
                     nl +
                 size_t(il)];
        row += wx * f.eval(z);
      }
      col += wy * row;
    }
    return col;
  }

  /// Wavelength bracket for linear interpolation between knot columns.
  struct LambdaBracket {
    int il = 0;
    double w = 0.0;  // weight of knot il+1
    bool clamped = false;
  };
  LambdaBracket lambda_bracket(double lambda_nm) const {
    const auto& ls = grids.lambdas;
    LambdaBracket b;
    double llo = ls.front(), lhi = ls.back();
    if (lambda_nm < llo - lambda_margin_nm ||
        lambda_nm > lhi + lambda_margin_nm)
      throw RangeError("wavelength outside the correspondence model hull");
    if (lambda_nm < llo || lambda_nm > lhi) {
      b.clamped = true;
      lambda_nm = std::clamp(lambda_nm, llo, lhi);
    }
    if (ls.size() < 2) return b;
    b.il = detail::segment_index(ls, lambda_nm);
    b.w = std::clamp((lambda_nm - ls[size_t(b.il)]) /
                         (ls[size_t(b.il) + 1] - ls[size_t(b.il)]),
                     0.0, 1.0);
    return b;
  }

  QueryResult query_ex(const Eigen::Vector2d& p, double z, int m,
                       double lambda_nm) const {
    if (m == 0)
      throw DomainError("zero order is exact; use zero_order() instead");
    if (!has_order(m)) throw DomainError("order not modeled");
    QueryResult out;
    z = clamp_depth(z, &out.clamped);
    LambdaBracket lb = lambda_bracket(lambda_nm);
    out.clamped = out.clamped || lb.clamped;
    LatticeWeights lw = lattice_weights(p);
    out.clamped = out.clamped || lw.clamped;
    double col = knot_column(lw, z, m, lb.il);
    if (lb.w > 0.0)
      col = (1.0 - lb.w) * col +
            lb.w * knot_column(lw, z, m,
                               std::min(lb.il + 1,
                                        int(grids.lambdas.size()) - 1));
    out.col = col;
    return out;
  }

  double query(const Eigen::Vector2d& p, double z, int m,
               double lambda_nm) const {
    return query_ex(p, z, m, lambda_nm).col;
  }
};

/// Groups samples on the lattice and fits each (node, wavelength, order)
/// depth series. Series with fewer than 4 depths are filled from the nearest
/// fitted node so the interpolant stays total; orders with no usable series
/// are dropped.
inline CorrespondenceModel fit_correspondence(
    const std::vector<CorrespondenceSample>& samples, const SampleGrids& grids,
    int projector_width, const PowerLawOptions& opt = {}) {
  grids.validate();
  detail::require(projector_width > 0, "projector width must be positive");
  CorrespondenceModel model;
  model.grids = grids;
  model.projector_width = projector_width;

  const size_t nx = grids.pixel_xs.size();
  const size_t ny = grids.pixel_ys.size();
  const size_t nl = grids.lambdas.size();

  auto nearest = [](const std::vector<double>& xs, double v, double tol,
                    int* idx) {
    size_t best = 0;
    double bd = std::abs(xs[0] - v);
    for (size_t i = 1; i < xs.size(); ++i) {
      double d = std::abs(xs[i] - v);
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    *idx = int(best);
    return bd <= tol;
  };

  double cell_x = nx > 1 ? (grids.pixel_xs.back() - grids.pixel_xs.front()) /
                               double(nx - 1)
                         : 1.0;
  double cell_y = ny > 1 ? (grids.pixel_ys.back() - grids.pixel_ys.front()) /
                               double(ny - 1)
                         : 1.0;

  // Bucket samples into (m, node, lambda) series.
  std::map<int, std::vector<std::vector<std::pair<double, double>>>> series;
  for (const auto& s : samples) {
    detail::require(s.m == -1 || s.m == 1, "first-order samples only");
    int ix, iy, il;
    bool ok = nearest(grids.pixel_xs, s.px, 0.5 * cell_x + 1e-9, &ix) &&
              nearest(grids.pixel_ys, s.py, 0.5 * cell_y + 1e-9, &iy) &&
              nearest(grids.lambdas, s.lambda, 1.0, &il);
    if (!ok) continue;  // sample off the lattice; ignore
    auto& per_order = series[s.m];
    if (per_order.empty()) per_order.resize(nx * ny * nl);
    per_order[(size_t(iy) * nx + size_t(ix)) * nl + size_t(il)].emplace_back(
        s.z, s.q_col);
  }

  for (auto& [m, buckets] : series) {
    std::vector<PowerLawFit> fits(nx * ny * nl);
    size_t fitted = 0;
    for (size_t k = 0; k < buckets.size(); ++k) {
      auto& b = buckets[k];
      if (b.size() < 4) continue;
      std::sort(b.begin(), b.end());
      std::vector<double> zs, qs;
      zs.reserve(b.size());
      qs.reserve(b.size());
      for (auto& [zz, qq] : b) {
        if (!zs.empty() && zz <= zs.back()) continue;  // dedupe depths
        zs.push_back(zz);
        qs.push_back(qq);
      }
      if (zs.size() < 4) continue;
      fits[k] = fit_power_law(zs, qs, opt);
      if (fits[k].valid) ++fitted;
    }
    if (fitted == 0) continue;
    // Fill unfitted nodes from the nearest fitted node on the lattice.
    if (fitted < fits.size()) {
      std::vector<PowerLawFit> filled = fits;
      for (size_t iy = 0; iy < ny; ++iy)
        for (size_t ix = 0; ix < nx; ++ix)
          for (size_t il = 0; il < nl; ++il) {
            size_t k = (iy * nx + ix) * nl + il;
            if (fits[k].valid) continue;
            double bd = std::numeric_limits<double>::max();
            for (size_t jy = 0; jy < ny; ++jy)
              for (size_t jx = 0; jx < nx; ++jx) {
                size_t kk = (jy * nx + jx) * nl + il;
                if (!fits[kk].valid) continue;
                double dx = grids.pixel_xs[jx] - grids.pixel_xs[ix];
                double dy = grids.pixel_ys[jy] - grids.pixel_ys[iy];
                double d = dx * dx + dy * dy;
                if (d < bd) {
                  bd = d;
                  filled[k] = fits[kk];
                }
              }
          }
      fits.swap(filled);
    }
    model.orders.push_back(m);
    model.coefs.push_back(std::move(fits));
  }
  detail::require(!model.orders.empty(),
                  "no usable correspondence series to fit");
  return model;
}

/// Samples the exact optics at every lattice node and fits the surrogate.
/// Node solves that fail (off-panel geometry and the like) are skipped; the
/// fit-filling rule above keeps the model total.
inline CorrespondenceModel build_correspondence_model(
    const Rig& rig, const SampleGrids& grids, const std::vector<int>& orders,
    const PowerLawOptions& opt = {}) {
  grids.validate();
  std::vector<CorrespondenceSample> samples;
  samples.reserve(grids.pixel_xs.size() * grids.pixel_ys.size() *
                  grids.lambdas.size() * grids.depths.size() * orders.size());
  for (int m : orders) {
    detail::require(m == -1 || m == 1, "first orders only");
    for (double py : grids.pixel_ys)
      for (double px : grids.pixel_xs)
        for (double l : grids.lambdas)
          for (double z : grids.depths) {
            try {
              Eigen::Vector3d world =
                  unproject(Eigen::Vector2d(px, py), z, rig.camera);
              auto sol = solve_grating_point(world, rig, m, l);
              samples.push_back({px, py, z, m, l, sol.projector_px.x()});
            } catch (const Error&) {
              // leave the node to the filling rule
            }
          }
  }
  return fit_correspondence(samples, grids, rig.projector.width, opt);
}

/// First orders usable at (p, z): the queried column must stay on the panel
/// for every wavelength knot (linear interpolation keeps intermediate
/// wavelengths inside the knot range, so checking knots suffices).
inline std::vector<int> valid_orders(const Eigen::Vector2d& p, double z,
                                     const CorrespondenceModel& model,
                                     const Rig& rig) {
  std::vector<int> valid;
  for (int m : model.orders) {
    if (!rig.grating.has_order(m)) continue;
    bool ok = true;
    for (double l : model.grids.lambdas) {
      double col;
      try {
        col = model.query(p, z, m, l);
      } catch (const RangeError&) {
        ok = false;
        break;
      }
      if (col < 0.0 || col > rig.projector.width - 1) {
        ok = false;
        break;
      }
    }
    if (ok) valid.push_back(m);
  }
  std::sort(valid.begin(), valid.end());
  return valid;
}

}  // namespace dsl

#endif  // DSL_CORRESPONDENCE_HPP
