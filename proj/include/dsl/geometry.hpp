// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef DSL_GEOMETRY_HPP
#define DSL_GEOMETRY_HPP

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <vector>

#include "dsl/common.hpp"

namespace dsl {

struct RadialDistortion {
  double k1 = 0.0;
  double k2 = 0.0;
};

/// Pinhole device (camera or projector). Extrinsics map world to device:
/// x_dev = R * x_world + t. Units: mm for translation, px for intrinsics.
struct PinholeModel {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int width = 1, height = 1;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  std::optional<RadialDistortion> distortion;

  void validate() const {
    detail::require(fx > 0.0 && fy > 0.0, "focal lengths must be positive");
    detail::require(width > 0 && height > 0, "resolution must be positive");
    double dev = (rotation.transpose() * rotation -
                  Eigen::Matrix3d::Identity())
                     .norm();
    detail::require(dev < 1e-9, "rotation must be orthonormal");
  }

  Eigen::Vector3d center() const {
    return -(rotation.transpose() * translation);
  }
  Eigen::Vector3d to_device(const Eigen::Vector3d& world) const {
    return rotation * world + translation;
  }
  Eigen::Vector3d to_world(const Eigen::Vector3d& device) const {
    return rotation.transpose() * (device - translation);
  }
  bool contains(const Eigen::Vector2d& px) const {
    return px.x() >= 0.0 && px.x() <= width - 1 && px.y() >= 0.0 &&
           px.y() <= height - 1;
  }
};

namespace detail {

inline Eigen::Vector2d distort(const Eigen::Vector2d& n,
                               const RadialDistortion& d) {
  double r2 = n.squaredNorm();
  return n * (1.0 + d.k1 * r2 + d.k2 * r2 * r2);
}

inline Eigen::Vector2d undistort(const Eigen::Vector2d& n,
                                 const RadialDistortion& d) {
  Eigen::Vector2d u = n;  // fixed-point inversion, converges for mild k1,k2
  for (int i = 0; i < 12; ++i) {
    double r2 = u.squaredNorm();
    u = n / (1.0 + d.k1 * r2 + d.k2 * r2 * r2);
  }
  return u;
}

/// Projects a device-frame direction/point through intrinsics only.
inline Eigen::Vector2d project_device(const Eigen::Vector3d& dev,
                                      const PinholeModel& model) {
  if (dev.z() <= 1e-12)
    throw ProjectionError("point at or behind the pinhole center");
  Eigen::Vector2d n(dev.x() / dev.z(), dev.y() / dev.z());
  if (model.distortion) n = distort(n, *model.distortion);
  return {model.fx * n.x() + model.cx, model.fy * n.y() + model.cy};
}

}  // namespace detail

/// Pixel + device-frame depth -> world point.
inline Eigen::Vector3d unproject(const Eigen::Vector2d& px, double z,
                                 const PinholeModel& model) {
  if (!(z > 0.0)) throw DomainError("unproject requires z > 0");
  Eigen::Vector2d n((px.x() - model.cx) / model.fx,
                    (px.y() - model.cy) / model.fy);
  if (model.distortion) n = detail::undistort(n, *model.distortion);
  Eigen::Vector3d dev(n.x() * z, n.y() * z, z);
  return model.to_world(dev);
}

/// World point -> pixel.
inline Eigen::Vector2d project(const Eigen::Vector3d& world,
                               const PinholeModel& model) {
  return detail::project_device(model.to_device(world), model);
}

/// Transmissive grating, grooves along the device y-axis so dispersion acts
/// on x. Plane sits perpendicular to the projector optical axis at
/// plane_offset_mm in front of the pinhole.
struct GratingModel {
  double groove_density = 0.0;   // lines per nm
  double plane_offset_mm = 10.0;
  std::vector<int> orders = {-1, 0, 1};

  void validate() const {
    detail::require(groove_density > 0.0, "groove density must be positive");
    detail::require(plane_offset_mm > 0.0, "grating offset must be positive");
    bool has_zero = false;
    for (int m : orders) {
      detail::require(m >= -1 && m <= 1, "orders limited to {-1,0,1}");
      if (m == 0) has_zero = true;
    }
    detail::require(has_zero, "orders must contain 0");
  }
  bool has_order(int m) const {
    for (int o : orders)
      if (o == m) return true;
    return false;
  }
};

struct Rig {
  PinholeModel camera;
  PinholeModel projector;
  GratingModel grating;

  void validate() const {
    camera.validate();
    projector.validate();
    grating.validate();
    detail::require((camera.center() - projector.center()).norm() > 0.0,
                    "camera and projector centers must be distinct");
  }
  double baseline() const {
    return (camera.center() - projector.center()).norm();
  }
};

/// Grating equation for a unit incident direction v (device frame, v_z > 0):
/// d = (-m g lambda + v_x, v_y, sqrt(1 - d_x^2 - d_y^2)).
inline Eigen::Vector3d diffract(const Eigen::Vector3d& v, int m,
                                double lambda_nm, double groove_density) {
  detail::require(std::abs(v.norm() - 1.0) < 1e-6,
                  "diffract expects a unit direction");
  detail::require(v.z() > 0.0, "diffract expects forward propagation");
  double dx = -double(m) * groove_density * lambda_nm + v.x();
  double dy = v.y();
  double s = dx * dx + dy * dy;
  if (s > 1.0)
    throw EvanescentError("diffraction order does not propagate");
  return {dx, dy, std::sqrt(1.0 - s)};
}

struct GratingSolution {
  Eigen::Vector3d grating_point_world;
  Eigen::Vector2d projector_px;
  double residual = 0.0;
};

namespace detail {

// The two-angle consistency residuals used by solve_grating_point, written
// in the projector frame with the grating plane at z = h. r = (x, y, h),
// v = r/|r| (pinhole -> grating), u = unit(P - r) (grating -> scene point).
struct GratingResiduals {
  Eigen::Vector3d P;  // scene point, projector frame
  double h;
  double shift;  // m * g * lambda

  double fy(double x, double y) const {
    double rho = std::sqrt(x * x + y * y + h * h);
    Eigen::Vector3d d = P - Eigen::Vector3d(x, y, h);
    return y / rho - d.y() / d.norm();
  }
  double fx(double x, double y) const {
    double rho = std::sqrt(x * x + y * y + h * h);
    Eigen::Vector3d d = P - Eigen::Vector3d(x, y, h);
    return x / rho - shift - d.x() / d.norm();
  }
  // y solving fy = 0 at fixed x; fy is strictly increasing in y.
  double solve_y(double x) const {
    double lo = std::min(0.0, P.y()) - 1.0;
    double hi = std::max(0.0, P.y()) + 1.0;
    int guard = 0;
    while (fy(x, lo) > 0.0 && guard++ < 200) lo = 2.0 * lo - hi;
    while (fy(x, hi) < 0.0 && guard++ < 200) hi = 2.0 * hi - lo;
    if (guard >= 200)
      throw NoSolutionError("grating y-bracket expansion failed");
    for (int i = 0; i < 80 && hi - lo > 1e-11 * (1.0 + std::abs(hi)); ++i) {
      double mid = 0.5 * (lo + hi);
      (fy(x, mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }
  double g(double x) const { return fx(x, solve_y(x)); }
};

}  // namespace detail

/// Finds the grating point r where the ray from the projector pinhole,
/// diffracted into order m at wavelength lambda, passes through scene_point.
/// The y-consistency constraint reduces the search to one dimension; the
/// signed x-residual is then bisected (80 iterations).
inline GratingSolution solve_grating_point(const Eigen::Vector3d& scene_point,
                                           const Rig& rig, int m,
                                           double lambda_nm) {
  detail::require(rig.grating.has_order(m), "order not active in this rig");
  const PinholeModel& proj = rig.projector;
  const double h = rig.grating.plane_offset_mm;
  Eigen::Vector3d P = proj.to_device(scene_point);
  if (P.z() <= h)
    throw DomainError("scene point must lie beyond the grating plane");

  const double shift = double(m) * rig.grating.groove_density * lambda_nm;
  GratingSolution out;
  if (shift == 0.0) {
    Eigen::Vector3d r = P * (h / P.z());
    out.grating_point_world = proj.to_world(r);
    out.projector_px = detail::project_device(r, proj);
    out.residual = 0.0;
    return out;
  }

  detail::GratingResiduals res{P, h, shift};
  double x0 = h * P.x() / P.z();
  double lo = x0, hi = x0;
  double g0 = res.g(x0);
  double span = std::max(1.0, std::abs(x0));
  int guard = 0;
  if (g0 < 0.0) {
    while (res.g(hi) < 0.0 && guard++ < 200) hi += (span *= 2.0);
  } else {
    while (res.g(lo) > 0.0 && guard++ < 200) lo -= (span *= 2.0);
  }
  if (guard >= 200)
    throw NoSolutionError("grating x-bracket expansion failed");
  for (int i = 0; i < 80 && hi - lo > 1e-11 * (1.0 + std::abs(hi)); ++i) {
    double mid = 0.5 * (lo + hi);
    (res.g(mid) < 0.0 ? lo : hi) = mid;
  }
  double x = 0.5 * (lo + hi);
  double y = res.solve_y(x);

  Eigen::Vector3d r(x, y, h);
  Eigen::Vector3d v = r.normalized();
  Eigen::Vector3d u = (P - r).normalized();
  Eigen::Vector3d d;
  try {
    d = diffract(v, m, lambda_nm, rig.grating.groove_density);
  } catch (const EvanescentError&) {
    throw NoSolutionError("diffracted order evanescent at solution");
  }
  out.residual = (d - u).norm();
  if (out.residual > 1e-8)
    throw ConvergenceError("grating point residual above tolerance");
  out.grating_point_world = proj.to_world(r);
  out.projector_px = detail::project_device(r, proj);
  return out;
}

/// Distance from the projector center to the scene point seen at camera
/// pixel p with depth z; the 1/d^2 falloff term.
inline double propagation_distance(const Eigen::Vector2d& p, double z,
                                   const Rig& rig) {
  Eigen::Vector3d world = unproject(p, z, rig.camera);
  return (world - rig.projector.center()).norm();
}

}  // namespace dsl

#endif  // DSL_GEOMETRY_HPP
