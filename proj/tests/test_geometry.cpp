// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "dsl/demo.hpp"
#include "dsl/geometry.hpp"
#include "dsl/rng.hpp"

using namespace dsl;

namespace {

Eigen::Vector3d random_forward_dir(std::uint64_t k) {
  double x = rng::uniform(3, k, 0, 0, 0, -0.3, 0.3);
  double y = rng::uniform(3, k, 1, 0, 0, -0.3, 0.3);
  return Eigen::Vector3d(x, y, std::sqrt(1.0 - x * x - y * y));
}

// Distance from point X to the ray r + t*d (t >= 0 not enforced; the checks
// below use geometries where the hit is forward).
double ray_point_distance(const Eigen::Vector3d& r, const Eigen::Vector3d& d,
                          const Eigen::Vector3d& X) {
  Eigen::Vector3d u = d.normalized();
  Eigen::Vector3d w = X - r;
  return (w - w.dot(u) * u).norm();
}

}  // namespace

TEST_CASE("diffract obeys the grating equation", "[geometry]") {
  const double g = 3.5e-4;
  for (std::uint64_t k = 0; k < 50; ++k) {
    Eigen::Vector3d v = random_forward_dir(k);
    double l = rng::uniform(4, k, 0, 0, 0, 430.0, 660.0);
    for (int m : {-1, 0, 1}) {
      Eigen::Vector3d d = diffract(v, m, l, g);
      REQUIRE(d.x() == Catch::Approx(v.x() - m * g * l).margin(1e-12));
      REQUIRE(d.y() == Catch::Approx(v.y()).margin(1e-15));
      REQUIRE(d.norm() == Catch::Approx(1.0).epsilon(1e-12));
      REQUIRE(d.z() > 0.0);
    }
  }
}

TEST_CASE("diffract rejects bad inputs and evanescent orders", "[geometry]") {
  const double g = 3.5e-4;
  REQUIRE_THROWS_AS(diffract({0.0, 0.0, 2.0}, 1, 550.0, g), DomainError);
  REQUIRE_THROWS_AS(diffract({0.0, 0.0, -1.0}, 1, 550.0, g), DomainError);
  // v_x - m g lambda leaves the unit disc -> no propagating wave
  Eigen::Vector3d steep(0.9, 0.0, std::sqrt(1.0 - 0.81));
  REQUIRE_THROWS_AS(diffract(steep, -1, 660.0, g), EvanescentError);
  REQUIRE_NOTHROW(diffract(steep, 1, 660.0, g));
}

TEST_CASE("zero order is the straight pinhole path", "[geometry]") {
  Rig rig = make_demo_rig();
  Eigen::Vector3d X = unproject({20.0, 40.0}, 400.0, rig.camera);
  auto sol = solve_grating_point(X, rig, 0, 550.0);
  Eigen::Vector2d direct = project(X, rig.projector);
  REQUIRE(sol.projector_px.x() == Catch::Approx(direct.x()).margin(1e-9));
  REQUIRE(sol.projector_px.y() == Catch::Approx(direct.y()).margin(1e-9));
  REQUIRE(sol.residual == 0.0);
  // the wavelength cannot matter for the undeviated order
  auto sol2 = solve_grating_point(X, rig, 0, 430.0);
  REQUIRE(sol.projector_px.x() == sol2.projector_px.x());
}

TEST_CASE("solve_grating_point closes the forward trace", "[geometry]") {
  Rig rig = make_demo_rig();
  const double h = rig.grating.plane_offset_mm;
  for (std::uint64_t k = 0; k < 40; ++k) {
    Eigen::Vector2d p{rng::uniform(5, k, 0, 0, 0, 4.0, 59.0),
                      rng::uniform(5, k, 1, 0, 0, 4.0, 59.0)};
    double z = rng::uniform(5, k, 2, 0, 0, 345.0, 455.0);
    double l = rng::uniform(5, k, 3, 0, 0, 430.0, 660.0);
    int m = (k % 2) ? 1 : -1;
    Eigen::Vector3d X = unproject(p, z, rig.camera);

    GratingSolution sol;
    try {
      sol = solve_grating_point(X, rig, m, l);
    } catch (const ProjectionError&) {
      continue;  // solution off the panel for this draw
    }
    REQUIRE(sol.residual < 1e-7);

    // independent check: push a ray from the projector pinhole through the
    // reported grating point, diffract it there, and confirm it passes
    // through the scene point
    Eigen::Vector3d r_dev = rig.projector.to_device(sol.grating_point_world);
    REQUIRE(r_dev.z() == Catch::Approx(h).margin(1e-9));
    Eigen::Vector3d d_dev =
        diffract(r_dev.normalized(), m, l, rig.grating.groove_density);
    Eigen::Vector3d d_world = rig.projector.rotation.transpose() * d_dev;
    REQUIRE(ray_point_distance(sol.grating_point_world, d_world, X) < 1e-6);

    // and the reported projector pixel images that grating point
    Eigen::Vector2d px = project(sol.grating_point_world, rig.projector);
    REQUIRE((px - sol.projector_px).norm() < 1e-9);
  }
}

TEST_CASE("solve_grating_point rejects degenerate geometry", "[geometry]") {
  Rig rig = make_demo_rig();
  // the projector pinhole itself sits at device z = 0, short of the plane
  Eigen::Vector3d pinhole = rig.projector.to_world(Eigen::Vector3d::Zero());
  REQUIRE_THROWS_AS(solve_grating_point(pinhole, rig, 1, 550.0), DomainError);
  REQUIRE_THROWS_AS(
      solve_grating_point({0.0, 0.0, 400.0}, rig, 2, 550.0),
      DomainError);  // order not active
}

TEST_CASE("pinhole projection round trips", "[geometry]") {
  Rig rig = make_demo_rig();
  for (std::uint64_t k = 0; k < 30; ++k) {
    Eigen::Vector2d p{rng::uniform(6, k, 0, 0, 0, 0.0, 63.0),
                      rng::uniform(6, k, 1, 0, 0, 0.0, 63.0)};
    double z = rng::uniform(6, k, 2, 0, 0, 300.0, 500.0);
    Eigen::Vector3d w = unproject(p, z, rig.camera);
    Eigen::Vector2d q = project(w, rig.camera);
    REQUIRE((q - p).norm() < 1e-9);
    REQUIRE(rig.camera.to_device(w).z() == Catch::Approx(z).margin(1e-9));
  }
  // projector round trip exercises a non-identity pose
  Eigen::Vector3d w = unproject({700.0, 360.0}, 500.0, rig.projector);
  Eigen::Vector2d q = project(w, rig.projector);
  REQUIRE(q.x() == Catch::Approx(700.0).margin(1e-9));
  REQUIRE(q.y() == Catch::Approx(360.0).margin(1e-9));
}

TEST_CASE("propagation distance matches the explicit construction",
          "[geometry]") {
  Rig rig = make_demo_rig();
  Eigen::Vector2d p{31.5, 31.5};
  double z = 400.0;
  double expect =
      (unproject(p, z, rig.camera) - rig.projector.center()).norm();
  REQUIRE(propagation_distance(p, z, rig) == Catch::Approx(expect));
  // quadrupling the falloff means doubling the distance
  REQUIRE(propagation_distance(p, 2.0 * z, rig) <
          2.0 * propagation_distance(p, z, rig) + 1.0);
}

TEST_CASE("rig validation catches bad configurations", "[geometry]") {
  Rig rig = make_demo_rig();
  REQUIRE_NOTHROW(rig.validate());
  REQUIRE(rig.baseline() == Catch::Approx(375.0).epsilon(1e-9));

  Rig bad = rig;
  bad.grating.groove_density = -1.0;
  REQUIRE_THROWS_AS(bad.validate(), DomainError);
  bad = rig;
  bad.camera.fx = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), DomainError);
  bad = rig;
  bad.grating.orders = {0};  // first orders are what the instrument is for
  REQUIRE_NOTHROW(bad.validate());
}
