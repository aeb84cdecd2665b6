// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef DSL_RECONSTRUCTION_HPP
#define DSL_RECONSTRUCTION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dsl/correspondence.hpp"
#include "dsl/forward_sim.hpp"
#include "dsl/image.hpp"
#include "dsl/parallel.hpp"
#include "dsl/patterns.hpp"
#include "dsl/scene.hpp"
#include "dsl/spectral.hpp"

namespace dsl {

struct DepthMap {
  int width = 0, height = 0;
  ImageGray z;
  std::vector<std::uint8_t> valid;

  DepthMap() = default;
  DepthMap(int w, int h)
      : width(w), height(h), z(w, h), valid(size_t(w) * size_t(h), 0) {}
  size_t pix(int x, int y) const {
    return static_cast<size_t>(y) * static_cast<size_t>(width) +
           static_cast<size_t>(x);
  }
};

// ---------------------------------------------------------------------------
// Binary-code decoding and depth triangulation
// ---------------------------------------------------------------------------

struct BinaryDecodeResult {
  int width = 0, height = 0;
  std::vector<std::int32_t> col, row;  // decoded projector pixel, -1 invalid
  std::vector<std::uint8_t> valid;
};

/// Thresholds a binary-code stack into per-pixel projector coordinates.
/// With both references the threshold sits tau of the way from the black
/// frame to the white frame; with only a white frame it is tau * white; with
/// neither, tau is used as an absolute level.
inline BinaryDecodeResult decode_binary(const CaptureStack& stack,
                                        const Image* white = nullptr,
                                        const Image* black = nullptr,
                                        double tau = 0.5,
                                        double min_signal = 1e-4) {
  stack.validate();
  detail::require(stack.patterns.kind == PatternKind::binary,
                  "decode_binary expects a binary-code stack");
  detail::require(tau > 0.0 && tau < 1.0, "tau must be inside (0, 1)");
  const int cb = stack.patterns.col_bits, rb = stack.patterns.row_bits;
  const int W = stack.width, H = stack.height;
  if (white)
    detail::require(white->width == W && white->height == H,
                    "white reference resolution mismatch");
  if (black)
    detail::require(black->width == W && black->height == H,
                    "black reference resolution mismatch");

  BinaryDecodeResult out;
  out.width = W;
  out.height = H;
  out.col.assign(size_t(W) * size_t(H), -1);
  out.row.assign(size_t(W) * size_t(H), -1);
  out.valid.assign(size_t(W) * size_t(H), 0);

  auto mean3 = [](const Image& img, int x, int y) {
    return (double(img.at(x, y, 0)) + double(img.at(x, y, 1)) +
            double(img.at(x, y, 2))) /
           3.0;
  };
  parallel_for(0, H, [&](int y) {
    for (int x = 0; x < W; ++x) {
      const size_t k = size_t(y) * size_t(W) + size_t(x);
      double thr;
      if (white && black) {
        double wv = mean3(*white, x, y), bv = mean3(*black, x, y);
        if (wv - bv <= min_signal) continue;  // no projector signal here
        thr = bv + tau * (wv - bv);
      } else if (white) {
        double wv = mean3(*white, x, y);
        if (wv <= min_signal) continue;
        thr = tau * wv;
      } else {
        thr = tau;
      }
      std::int64_t col = 0, row = 0;
      for (int i = 0; i < cb; ++i)
        if (mean3(stack.frames[size_t(i)], x, y) > thr)
          col |= std::int64_t(1) << i;
      for (int i = 0; i < rb; ++i)
        if (mean3(stack.frames[size_t(cb + i)], x, y) > thr)
          row |= std::int64_t(1) << i;
      if (col >= stack.patterns.width || row >= stack.patterns.height)
        continue;  // code outside the panel: a decoding error
      out.col[k] = std::int32_t(col);
      out.row[k] = std::int32_t(row);
      out.valid[k] = 1;
    }
  });
  return out;
}

struct TriangulateOptions {
  double z_min = 1.0, z_max = 1e5;
  int max_iters = 100;
  double tol_mm = 1e-9;
};

/// Solves for the depth whose undispersed projector column matches the
/// decoded one, by bisection along the camera ray.
inline std::optional<double> triangulate(const Eigen::Vector2d& p,
                                         double q_col, const Rig& rig,
                                         const TriangulateOptions& opt = {}) {
  detail::require(opt.z_min > 0.0 && opt.z_max > opt.z_min,
                  "triangulation depth range must be positive and ordered");
  auto col = [&](double z) { return zero_order(p, z, rig).x() - q_col; };
  double lo = opt.z_min, hi = opt.z_max, flo, fhi;
  try {
    flo = col(lo);
    fhi = col(hi);
  } catch (const Error&) {
    return std::nullopt;
  }
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) return std::nullopt;  // not bracketed
  for (int it = 0; it < opt.max_iters && hi - lo > opt.tol_mm; ++it) {
    double mid = 0.5 * (lo + hi);
    double fm;
    try {
      fm = col(mid);
    } catch (const Error&) {
      return std::nullopt;
    }
    if (fm == 0.0) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Per-pixel spectral system
// ---------------------------------------------------------------------------

/// Spectral response tables resampled onto a common wavelength grid, shared
/// by every pixel of a reconstruction.
struct SpectralTables {
  WavelengthGrid grid;
  std::array<std::vector<double>, 3> cam_w;
  std::vector<double> proj_sum;  // summed projector responses (white input)
  std::vector<double> eta0;
  std::vector<int> first_orders;
  std::vector<std::vector<double>> eta_first;
};

inline SpectralTables make_spectral_tables(const WavelengthGrid& grid,
                                           const ResponseSet& responses,
                                           const EfficiencySet& eta,
                                           const CorrespondenceModel& model,
                                           const Rig& rig) {
  responses.validate();
  eta.validate();
  SpectralTables tab;
  tab.grid = grid;
  tab.proj_sum.assign(size_t(grid.count), 0.0);
  for (int c = 0; c < 3; ++c) {
    tab.cam_w[size_t(c)] = resample(responses.cam[size_t(c)], grid).values;
    auto pw = resample(responses.proj[size_t(c)], grid).values;
    for (int j = 0; j < grid.count; ++j)
      tab.proj_sum[size_t(j)] += pw[size_t(j)];
  }
  tab.eta0 = resample(eta.at(0), grid).values;
  for (int m : model.orders)
    if (rig.grating.has_order(m) && eta.has(m)) {
      tab.first_orders.push_back(m);
      tab.eta_first.push_back(resample(eta.at(m), grid).values);
    }
  return tab;
}

/// The linear system tying one pixel's spectrum to its scanline captures.
/// Rows come in blocks, one per diffraction order, so the solver can weight
/// dispersed and undispersed evidence differently.
struct PixelSystem {
  int nl = 0;
  std::vector<int> orders;  // block labels; 0 is the undispersed block
  std::vector<Eigen::MatrixXd> A;
  std::vector<Eigen::VectorXd> I;
  bool incomplete = false;  // a candidate order was unusable at this pixel

  bool empty() const {
    for (const auto& a : A)
      if (a.rows() > 0) return false;
    return true;
  }
  int total_rows() const {
    int n = 0;
    for (const auto& a : A) n += int(a.rows());
    return n;
  }
};

/// Builds the measurement model for one pixel at a known depth. Each chosen
/// scanline frame becomes three rows (one per camera channel) modelling every
/// order and wavelength that frame's line illuminates at this pixel.
inline PixelSystem build_system(const Eigen::Vector2d& p, double z,
                                const CorrespondenceModel& model,
                                const Rig& rig, const SpectralTables& tab,
                                const CaptureStack& scan_stack) {
  scan_stack.validate();
  detail::require(scan_stack.patterns.kind == PatternKind::scanline,
                  "build_system expects a scanline stack");
  const ScanlineSpec& spec = scan_stack.patterns.scan;
  const int Wp = rig.projector.width;
  const int nl = tab.grid.count;
  const int x = int(std::lround(p.x())), y = int(std::lround(p.y()));
  detail::require(x >= 0 && x < scan_stack.width && y >= 0 &&
                      y < scan_stack.height,
                  "pixel outside the capture");

  PixelSystem sys;
  sys.nl = nl;

  Eigen::Vector2d q0;
  LatticeWeights lw;
  double zc;
  try {
    q0 = zero_order(p, z, rig);
    if (!tab.first_orders.empty()) {
      zc = model.clamp_depth(z, nullptr);
      lw = model.lattice_weights(p);
    } else {
      zc = z;
    }
  } catch (const Error&) {
    sys.incomplete = true;
    return sys;
  }
  const double d = propagation_distance(p, z, rig);
  // the capture's exposure and intensity scales are part of the forward map
  const double gain = scan_stack.exposure * scan_stack.intensity;
  const double d2inv = double(float(1.0 / (d * d))) * gain;

  const std::int32_t row0 = std::int32_t(std::lround(q0.y()));
  if (row0 < 0 || row0 >= rig.projector.height) {
    sys.incomplete = true;
    return sys;
  }

  // rounded column per contribution; -1 where the light misses the panel
  const std::int32_t c0px = [&] {
    std::int32_t c = std::int32_t(std::lround(q0.x()));
    return (c >= 0 && c < Wp) ? c : -1;
  }();
  const auto& ls = model.grids.lambdas;
  std::vector<std::vector<std::int32_t>> cfirst;  // [usable order][j]
  std::vector<size_t> order_tab_idx;
  for (size_t o = 0; o < tab.first_orders.size(); ++o) {
    const int m = tab.first_orders[o];
    std::vector<double> knot_cols(ls.size());
    bool ok = true;
    for (size_t il = 0; il < ls.size(); ++il) {
      knot_cols[il] = model.knot_column(lw, zc, m, int(il));
      if (knot_cols[il] < 0.0 || knot_cols[il] > Wp - 1) {
        ok = false;
        break;
      }
    }
    if (!ok) {
      sys.incomplete = true;
      continue;
    }
    std::vector<std::int32_t> cols(size_t(nl), -1);
    for (int j = 0; j < nl; ++j) {
      double l = tab.grid.wavelength(j);
      auto lb = model.lambda_bracket(l);
      double col = knot_cols[size_t(lb.il)];
      if (lb.w > 0.0)
        col = (1.0 - lb.w) * col +
              lb.w * knot_cols[std::min(size_t(lb.il) + 1, ls.size() - 1)];
      std::int32_t ci = std::int32_t(std::lround(col));
      cols[size_t(j)] = (ci >= 0 && ci < Wp) ? ci : -1;
    }
    cfirst.push_back(std::move(cols));
    order_tab_idx.push_back(o);
  }
  if (c0px < 0) sys.incomplete = true;

  // pick one frame per contribution, then model each picked frame exactly
  std::map<int, int> frame_block;  // scanline index -> block label
  auto pick = [&](std::int32_t col, int label) {
    if (col < 0) return;
    try {
      int idx = px2index(double(col), spec);
      frame_block.emplace(idx, label);  // first claim wins
    } catch (const CoverageError&) {
      // column on the panel but outside every line: never observed
    }
  };
  pick(c0px, 0);
  for (size_t u = 0; u < cfirst.size(); ++u)
    for (int j = 0; j < nl; ++j)
      pick(cfirst[u][size_t(j)], tab.first_orders[order_tab_idx[u]]);

  if (frame_block.empty()) return sys;

  // group rows by block label, preserving zero-first order
  std::vector<int> labels;
  labels.push_back(0);
  for (size_t u = 0; u < cfirst.size(); ++u)
    labels.push_back(tab.first_orders[order_tab_idx[u]]);
  for (int label : labels) {
    std::vector<int> frames;
    for (const auto& [idx, bl] : frame_block)
      if (bl == label) frames.push_back(idx);
    if (frames.empty()) {
      if (label == 0) continue;  // zero order may simply be off panel
      continue;
    }
    Eigen::MatrixXd A =
        Eigen::MatrixXd::Zero(3 * std::ptrdiff_t(frames.size()), nl);
    Eigen::VectorXd I(3 * std::ptrdiff_t(frames.size()));
    for (size_t fi = 0; fi < frames.size(); ++fi) {
      const int idx = frames[fi];
      std::vector<double> spec_row(size_t(nl), 0.0);
      if (c0px >= 0 && spec.covers(idx, c0px))
        for (int j = 0; j < nl; ++j)
          spec_row[size_t(j)] +=
              tab.eta0[size_t(j)] * tab.proj_sum[size_t(j)] * d2inv;
      for (size_t u = 0; u < cfirst.size(); ++u) {
        const auto& etaf = tab.eta_first[order_tab_idx[u]];
        for (int j = 0; j < nl; ++j) {
          std::int32_t col = cfirst[u][size_t(j)];
          if (col >= 0 && spec.covers(idx, col))
            spec_row[size_t(j)] +=
                etaf[size_t(j)] * tab.proj_sum[size_t(j)] * d2inv;
        }
      }
      const Image& frame = scan_stack.frames[size_t(idx)];
      for (int c = 0; c < 3; ++c) {
        const auto r = std::ptrdiff_t(3 * fi + size_t(c));
        for (int j = 0; j < nl; ++j)
          A(r, j) = tab.cam_w[size_t(c)][size_t(j)] * spec_row[size_t(j)];
        I(r) = double(frame.at(x, y, c));
      }
    }
    sys.orders.push_back(label);
    sys.A.push_back(std::move(A));
    sys.I.push_back(std::move(I));
  }
  return sys;
}

// ---------------------------------------------------------------------------
// Spatially varying data weights
// ---------------------------------------------------------------------------

struct KappaMaps {
  int width = 0, height = 0;
  std::vector<float> k0, k1;  // undispersed / dispersed data weights
  double kappa_lambda = 0.005;
};

namespace detail {

inline std::vector<float> gaussian_blur_2d(const std::vector<float>& src,
                                           int w, int h, double sigma) {
  require(sigma > 0.0, "blur sigma must be positive");
  const int radius = int(std::ceil(3.0 * sigma));
  std::vector<double> kern(size_t(radius) + 1);
  double norm = 0.0;
  for (int i = 0; i <= radius; ++i) {
    kern[size_t(i)] = std::exp(-0.5 * double(i) * double(i) / (sigma * sigma));
    norm += (i == 0 ? 1.0 : 2.0) * kern[size_t(i)];
  }
  for (auto& v : kern) v /= norm;

  std::vector<float> tmp(src.size()), dst(src.size());
  auto clampi = [](int v, int n) { return std::min(std::max(v, 0), n - 1); };
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      double acc = kern[0] * double(src[size_t(y) * size_t(w) + size_t(x)]);
      for (int i = 1; i <= radius; ++i)
        acc += kern[size_t(i)] *
               (double(src[size_t(y) * size_t(w) + size_t(clampi(x - i, w))]) +
                double(src[size_t(y) * size_t(w) + size_t(clampi(x + i, w))]));
      tmp[size_t(y) * size_t(w) + size_t(x)] = float(acc);
    }
  });
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      double acc = kern[0] * double(tmp[size_t(y) * size_t(w) + size_t(x)]);
      for (int i = 1; i <= radius; ++i)
        acc += kern[size_t(i)] *
               (double(tmp[size_t(clampi(y - i, h)) * size_t(w) + size_t(x)]) +
                double(tmp[size_t(clampi(y + i, h)) * size_t(w) + size_t(x)]));
      dst[size_t(y) * size_t(w) + size_t(x)] = float(acc);
    }
  });
  return dst;
}

}  // namespace detail

/// Turns the incomplete-order mask into smooth per-pixel data weights: the
/// dispersed weight fades to zero near pixels where a first order is missing
/// and the undispersed weight takes over there.
inline KappaMaps compute_kappa(const std::vector<std::uint8_t>& incomplete,
                               int w, int h, double sigma = 5.0,
                               double interior = 0.9,
                               double kappa_lambda = 0.005) {
  detail::require(int(incomplete.size()) == w * h, "mask size mismatch");
  detail::require(interior >= 0.0 && interior <= 1.0,
                  "interior weight must be in [0, 1]");
  detail::require(kappa_lambda >= 0.0, "kappa_lambda must be non-negative");
  std::vector<float> mask(incomplete.size());
  for (size_t i = 0; i < incomplete.size(); ++i)
    mask[i] = incomplete[i] ? 1.f : 0.f;
  std::vector<float> blurred = detail::gaussian_blur_2d(mask, w, h, sigma);
  KappaMaps maps;
  maps.width = w;
  maps.height = h;
  maps.kappa_lambda = kappa_lambda;
  maps.k0.resize(mask.size());
  maps.k1.resize(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) {
    float b = std::min(std::max(blurred[i], 0.f), 1.f);
    maps.k1[i] = float(interior) * (1.f - b);
    maps.k0[i] = 1.f - maps.k1[i];
  }
  return maps;
}

// ---------------------------------------------------------------------------
// Non-negative spectral solve
// ---------------------------------------------------------------------------

struct SolveOptions {
  // The default cap is sized for the ill-conditioned per-pixel systems the
  // reconstruction produces; projected gradient descent crawls through their
  // smooth low-curvature directions and typically needs ~2e4 steps to settle.
  int max_iters = 30000;
  double tol = 1e-12;  // relative objective decrease
  int power_iters = 60;
};

struct SolveResult {
  Eigen::VectorXd H;
  int iterations = 0;
  bool converged = false;
  bool failed = false;  // step halving bottomed out
  double objective = 0.0;
};

/// Minimizes the weighted least-squares objective with a first-difference
/// smoothness term under H >= 0, by projected gradient descent with a
/// Lipschitz step. Divergence triggers step halving; if the step underflows
/// the result is flagged failed.
inline SolveResult solve_pixel(const PixelSystem& sys, double kappa0,
                               double kappa1, double kappa_lambda,
                               const SolveOptions& opt = {}) {
  detail::require(sys.nl > 0, "system has no spectral dimension");
  detail::require(kappa0 >= 0.0 && kappa1 >= 0.0 && kappa_lambda >= 0.0,
                  "weights must be non-negative");
  const int n = sys.nl;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (size_t i = 0; i < sys.A.size(); ++i) {
    if (sys.A[i].rows() == 0) continue;
    const double w = sys.orders[i] == 0 ? kappa0 : kappa1;
    if (w == 0.0) continue;
    M.noalias() += w * sys.A[i].transpose() * sys.A[i];
    b.noalias() += w * sys.A[i].transpose() * sys.I[i];
  }
  if (kappa_lambda > 0.0) {
    for (int j = 0; j + 1 < n; ++j) {  // D^T D for forward differences
      M(j, j) += kappa_lambda;
      M(j + 1, j + 1) += kappa_lambda;
      M(j, j + 1) -= kappa_lambda;
      M(j + 1, j) -= kappa_lambda;
    }
  }

  SolveResult res;
  if (M.cwiseAbs().maxCoeff() == 0.0) {
    res.H = Eigen::VectorXd::Zero(n);
    res.converged = b.cwiseAbs().maxCoeff() == 0.0;
    return res;
  }

  // largest eigenvalue by power iteration (M is symmetric PSD)
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n).normalized();
  for (int it = 0; it < opt.power_iters; ++it) {
    Eigen::VectorXd Mv = M * v;
    double nrm = Mv.norm();
    if (nrm == 0.0) break;
    v = Mv / nrm;
  }
  double L = v.dot(M * v);
  if (!(L > 0.0)) L = M.diagonal().maxCoeff();
  L *= 1.02;

  // start from the better (by objective) of two cheap candidates: the
  // non-negative diagonal solve (exact when M is diagonal) and the clamped
  // normal-equation solution, which is decisive when the descent direction
  // is badly conditioned (for example zero-order-only systems)
  Eigen::VectorXd H(n);
  for (int j = 0; j < n; ++j)
    H(j) = M(j, j) > 0.0 ? std::max(0.0, b(j) / M(j, j)) : 0.0;
  {
    Eigen::VectorXd Hc = M.ldlt().solve(b).cwiseMax(0.0);
    if (Hc.allFinite()) {
      auto obj = [&](const Eigen::VectorXd& x) {
        return 0.5 * x.dot(M * x) - b.dot(x);
      };
      if (obj(Hc) < obj(H)) H = std::move(Hc);
    }
  }

  Eigen::VectorXd MH = M * H;
  double g = 0.5 * H.dot(MH) - b.dot(H);
  double scale = 1.0;
  for (int it = 0; it < opt.max_iters; ++it) {
    Eigen::VectorXd Hn =
        (H - (scale / L) * (MH - b)).cwiseMax(0.0);
    Eigen::VectorXd MHn = M * Hn;
    double gn = 0.5 * Hn.dot(MHn) - b.dot(Hn);
    if (gn > g + 1e-15 * (1.0 + std::abs(g))) {
      scale *= 0.5;
      if (scale < 1e-8) {
        res.failed = true;
        break;
      }
      continue;
    }
    const bool done = std::abs(g - gn) <= opt.tol * std::max(1.0, std::abs(g));
    H = std::move(Hn);
    MH = std::move(MHn);
    g = gn;
    res.iterations = it + 1;
    if (done) {
      res.converged = true;
      break;
    }
  }
  res.H = std::move(H);
  res.objective = g;
  return res;
}

// ---------------------------------------------------------------------------
// End-to-end reconstruction
// ---------------------------------------------------------------------------

struct ReconstructOptions {
  WavelengthGrid grid = WavelengthGrid::standard();
  double tau = 0.5;
  double min_signal = 1e-4;
  double z_min = 0.0, z_max = 0.0;  // <= 0: derive from the model depth grid
  double kappa_sigma = 5.0;
  double kappa_interior = 0.9;
  double kappa_lambda = 0.005;
  SolveOptions solver;
  bool solve_spectra = true;
};

struct ReconstructStats {
  int depth_valid = 0;
  int spectra_solved = 0;
  int solver_failures = 0;
  double mean_iterations = 0.0;
};

struct ReconstructionResult {
  DepthMap depth;
  SpectralCube cube;
  std::vector<std::uint8_t> spectra_valid;
  std::vector<std::uint8_t> incomplete;  // the mask behind the kappa maps
  KappaMaps kappa;
  ReconstructStats stats;
};

/// Runs the full pipeline: decode the binary stack into projector columns,
/// triangulate depth, derive data weights from order coverage, then solve
/// every valid pixel's spectrum from the scanline stack.
inline ReconstructionResult reconstruct(
    const CaptureStack& binary_stack, const Image* white, const Image* black,
    const CaptureStack& scan_stack, const CorrespondenceModel& model,
    const Rig& rig, const ResponseSet& responses, const EfficiencySet& eta,
    const ReconstructOptions& opt = {}) {
  const int W = binary_stack.width, H = binary_stack.height;
  detail::require(W == rig.camera.width && H == rig.camera.height,
                  "capture must match the camera resolution");

  TriangulateOptions tri;
  if (opt.z_min > 0.0 && opt.z_max > opt.z_min) {
    tri.z_min = opt.z_min;
    tri.z_max = opt.z_max;
  } else {
    const auto& zs = model.grids.depths;
    const double span = zs.back() - zs.front();
    tri.z_min = std::max(1e-6, zs.front() - model.z_margin_frac * span);
    tri.z_max = zs.back() + model.z_margin_frac * span;
  }

  ReconstructionResult out;
  out.depth = DepthMap(W, H);
  BinaryDecodeResult codes =
      decode_binary(binary_stack, white, black, opt.tau, opt.min_signal);
  parallel_for(0, H, [&](int y) {
    for (int x = 0; x < W; ++x) {
      const size_t k = out.depth.pix(x, y);
      if (!codes.valid[k]) continue;
      auto z = triangulate(Eigen::Vector2d(double(x), double(y)),
                           double(codes.col[k]), rig, tri);
      if (!z) continue;
      out.depth.z.at(x, y) = float(*z);
      out.depth.valid[k] = 1;
    }
  });
  for (auto v : out.depth.valid) out.stats.depth_valid += v;

  if (!opt.solve_spectra) return out;

  SpectralTables tab =
      make_spectral_tables(opt.grid, responses, eta, model, rig);

  // first pass: which pixels see every candidate order?
  out.incomplete.assign(size_t(W) * size_t(H), 1);
  parallel_for(0, H, [&](int y) {
    for (int x = 0; x < W; ++x) {
      const size_t k = out.depth.pix(x, y);
      if (!out.depth.valid[k]) continue;
      try {
        auto orders =
            valid_orders(Eigen::Vector2d(double(x), double(y)),
                         double(out.depth.z.at(x, y)), model, rig);
        if (orders.size() == tab.first_orders.size())
          out.incomplete[k] = 0;
      } catch (const Error&) {
      }
    }
  });
  out.kappa = compute_kappa(out.incomplete, W, H, opt.kappa_sigma,
                            opt.kappa_interior, opt.kappa_lambda);

  out.cube = SpectralCube(W, H, tab.grid);
  out.spectra_valid.assign(size_t(W) * size_t(H), 0);
  std::vector<std::int32_t> iters(size_t(W) * size_t(H), 0);
  std::vector<std::uint8_t> failures(size_t(W) * size_t(H), 0);
  parallel_for(0, H, [&](int y) {
    for (int x = 0; x < W; ++x) {
      const size_t k = out.depth.pix(x, y);
      if (!out.depth.valid[k]) continue;
      PixelSystem sys =
          build_system(Eigen::Vector2d(double(x), double(y)),
                       double(out.depth.z.at(x, y)), model, rig, tab,
                       scan_stack);
      if (sys.empty()) continue;
      SolveResult sol =
          solve_pixel(sys, double(out.kappa.k0[k]), double(out.kappa.k1[k]),
                      out.kappa.kappa_lambda, opt.solver);
      if (sol.failed) {
        failures[k] = 1;
        continue;
      }
      for (int j = 0; j < tab.grid.count; ++j)
        out.cube.at(x, y, j) = float(sol.H(j));
      out.spectra_valid[k] = 1;
      iters[k] = sol.iterations;
    }
  });
  long long iter_sum = 0;
  for (size_t k = 0; k < iters.size(); ++k) {
    out.stats.spectra_solved += out.spectra_valid[k];
    out.stats.solver_failures += failures[k];
    iter_sum += iters[k];
  }
  out.stats.mean_iterations =
      out.stats.spectra_solved > 0
          ? double(iter_sum) / double(out.stats.spectra_solved)
          : 0.0;
  return out;
}

}  // namespace dsl

#endif  // DSL_RECONSTRUCTION_HPP
