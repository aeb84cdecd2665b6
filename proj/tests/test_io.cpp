// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "dsl/demo.hpp"
#include "dsl/io.hpp"
#include "dsl/rng.hpp"

using namespace dsl;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "dsl_io_tests";
    fs::create_directories(d);
    return d;
  }();
  return (dir / name).string();
}

void append_byte(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::app);
  f.put('x');
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
}

}  // namespace

TEST_CASE("color PFM images round trip bit for bit", "[io]") {
  Image img(7, 5);
  for (size_t i = 0; i < img.v.size(); ++i)
    img.v[i] = float(rng::uniform(7, i, 0, 0, 0, -2.0, 9.0));
  std::string path = tmp_path("color.pfm");
  write_pfm(path, img);
  Image back = read_pfm(path);
  REQUIRE(back.width == 7);
  REQUIRE(back.height == 5);
  REQUIRE(back.v == img.v);
  REQUIRE_THROWS_AS(read_pfm_gray(path), ParseError);
}

TEST_CASE("gray PFM images round trip bit for bit", "[io]") {
  ImageGray img(6, 9);
  for (size_t i = 0; i < img.v.size(); ++i)
    img.v[i] = float(rng::uniform(8, i, 0, 0, 0, 0.0, 500.0));
  std::string path = tmp_path("gray.pfm");
  write_pfm(path, img);
  ImageGray back = read_pfm_gray(path);
  REQUIRE(back.width == 6);
  REQUIRE(back.height == 9);
  REQUIRE(back.v == img.v);
  REQUIRE_THROWS_AS(read_pfm(path), ParseError);
  REQUIRE_THROWS_AS(read_pfm(tmp_path("no_such.pfm")), IoError);
}

TEST_CASE("hyperspectral cubes round trip through DSLH blobs", "[io]") {
  WavelengthGrid grid = WavelengthGrid::standard();
  SpectralCube cube(5, 4, grid);
  for (size_t i = 0; i < cube.values.size(); ++i)
    cube.values[i] = float(rng::uniform(9, i, 0, 0, 0, 0.0, 1.0));
  std::string path = tmp_path("cube.dslh");
  write_cube(path, cube);
  SpectralCube back = read_cube(path, grid);
  REQUIRE(back.width == 5);
  REQUIRE(back.height == 4);
  REQUIRE(back.values == cube.values);

  SECTION("a grid of the wrong length is rejected") {
    try {
      read_cube(path, WavelengthGrid(430.0, 660.0, 10.0));
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      REQUIRE(std::string(e.what()).find("(byte ") != std::string::npos);
    }
  }
  SECTION("trailing bytes are rejected") {
    append_byte(path);
    REQUIRE_THROWS_AS(read_cube(path, grid), ParseError);
  }
  SECTION("a truncated blob is rejected") {
    write_text(path, "DSLH");
    REQUIRE_THROWS_AS(read_cube(path, grid), ParseError);
  }
}

TEST_CASE("spectral CSVs round trip exactly", "[io]") {
  WavelengthGrid grid = WavelengthGrid::standard();
  std::vector<double> vals(size_t(grid.count));
  for (size_t i = 0; i < vals.size(); ++i)
    vals[i] = rng::uniform(10, i, 0, 0, 0, 0.0, 1.0);
  SpectralCurve curve(grid, vals);
  std::string path = tmp_path("curve.csv");
  write_spectral_csv(path, curve);
  SpectralCurve back = read_spectral_csv(path);
  REQUIRE(back.grid == grid);
  REQUIRE(back.values == curve.values);

  write_text(path, "wavelength_nm,value\n430,0.5\n440,oops\n");
  REQUIRE_THROWS_AS(read_spectral_csv(path), ParseError);
  write_text(path, "wavelength_nm,value\n430,0.1\n435,0.2\n445,0.3\n");
  REQUIRE_THROWS_AS(read_spectral_csv(path), ParseError);  // uneven spacing
}

TEST_CASE("trichromatic response CSVs round trip exactly", "[io]") {
  WavelengthGrid grid = WavelengthGrid::standard();
  ResponseSet r = ResponseSet::shipped_default(grid);
  std::array<SpectralCurve, 3> cam = {resample(r.cam[0], grid),
                                      resample(r.cam[1], grid),
                                      resample(r.cam[2], grid)};
  std::string path = tmp_path("response.csv");
  write_response_csv(path, cam);
  auto back = read_response_csv(path);
  for (int c = 0; c < 3; ++c) {
    REQUIRE(back[size_t(c)].grid == grid);
    REQUIRE(back[size_t(c)].values == cam[size_t(c)].values);
  }
  cam[2] = SpectralCurve(WavelengthGrid(430.0, 660.0, 10.0), 1.0);
  REQUIRE_THROWS_AS(write_response_csv(path, cam), DomainError);
}

TEST_CASE("correspondence sample CSVs round trip exactly", "[io]") {
  std::vector<CorrespondenceSample> ss;
  for (int i = 0; i < 10; ++i) {
    CorrespondenceSample s;
    s.px = rng::uniform(11, size_t(i), 1, 0, 0, 0.0, 63.0);
    s.py = rng::uniform(11, size_t(i), 2, 0, 0, 0.0, 63.0);
    s.z = rng::uniform(11, size_t(i), 3, 0, 0, 340.0, 460.0);
    s.m = (i % 3) - 1;
    s.lambda = 430.0 + 5.0 * i;
    s.q_col = rng::uniform(11, size_t(i), 4, 0, 0, 0.0, 2303.0);
    ss.push_back(s);
  }
  std::string path = tmp_path("samples.csv");
  write_samples_csv(path, ss);
  auto back = read_samples_csv(path);
  REQUIRE(back.size() == ss.size());
  for (size_t i = 0; i < ss.size(); ++i) {
    REQUIRE(back[i].px == ss[i].px);
    REQUIRE(back[i].py == ss[i].py);
    REQUIRE(back[i].z == ss[i].z);
    REQUIRE(back[i].m == ss[i].m);
    REQUIRE(back[i].lambda == ss[i].lambda);
    REQUIRE(back[i].q_col == ss[i].q_col);
  }
  write_text(path, "px,py,z_mm,m,lambda_nm,q_col\n1,2,400,1.5,640,700\n");
  REQUIRE_THROWS_AS(read_samples_csv(path), ParseError);
}

TEST_CASE("correspondence models round trip through DSLC blobs", "[io]") {
  Rig rig = make_demo_rig();
  CorrespondenceModel model =
      build_correspondence_model(rig, demo_sample_grids(), {-1, 1});
  std::string path = tmp_path("model.dslc");
  write_model(path, model);
  CorrespondenceModel back = read_model(path);

  REQUIRE(back.orders == model.orders);
  REQUIRE(back.projector_width == model.projector_width);
  REQUIRE(back.grids.pixel_xs == model.grids.pixel_xs);
  REQUIRE(back.grids.depths == model.grids.depths);
  REQUIRE(back.z_margin_frac == model.z_margin_frac);
  for (size_t o = 0; o < model.coefs.size(); ++o)
    for (size_t i = 0; i < model.coefs[o].size(); ++i) {
      REQUIRE(back.coefs[o][i].alpha == model.coefs[o][i].alpha);
      REQUIRE(back.coefs[o][i].beta == model.coefs[o][i].beta);
      REQUIRE(back.coefs[o][i].gamma == model.coefs[o][i].gamma);
      REQUIRE(back.coefs[o][i].valid == model.coefs[o][i].valid);
    }
  for (int i = 0; i < 8; ++i) {
    Eigen::Vector2d p(rng::uniform(12, size_t(i), 0, 0, 0, 6.0, 58.0),
                      rng::uniform(12, size_t(i), 1, 0, 0, 6.0, 58.0));
    double z = rng::uniform(12, size_t(i), 2, 0, 0, 350.0, 450.0);
    int m = i % 2 ? 1 : -1;
    double l = rng::uniform(12, size_t(i), 3, 0, 0, 430.0, 660.0);
    REQUIRE(back.query(p, z, m, l) == model.query(p, z, m, l));
  }

  SECTION("trailing bytes are rejected") {
    append_byte(path);
    REQUIRE_THROWS_AS(read_model(path), ParseError);
  }
  SECTION("a bad magic is rejected") {
    write_text(path, "NOPE");
    REQUIRE_THROWS_AS(read_model(path), ParseError);
  }
}

TEST_CASE("rig manifests round trip through JSON", "[io]") {
  Rig rig = make_demo_rig();
  rig.camera.distortion = RadialDistortion{1e-9, -2e-10};
  std::string path = tmp_path("rig.json");
  write_rig(path, rig);
  Rig back = read_rig(path);
  REQUIRE(back.camera.fx == rig.camera.fx);
  REQUIRE(back.camera.cy == rig.camera.cy);
  REQUIRE(back.camera.width == rig.camera.width);
  REQUIRE((back.camera.rotation - rig.camera.rotation).norm() == 0.0);
  REQUIRE((back.projector.translation - rig.projector.translation).norm() ==
          0.0);
  REQUIRE(back.grating.groove_density == rig.grating.groove_density);
  REQUIRE(back.grating.orders == rig.grating.orders);
  REQUIRE(back.camera.distortion.has_value());
  REQUIRE(back.camera.distortion->k1 == rig.camera.distortion->k1);
  REQUIRE_FALSE(back.projector.distortion.has_value());

  write_text(path, "{ not json");
  try {
    read_rig(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    REQUIRE(std::string(e.what()).find("(byte ") != std::string::npos);
  }
  REQUIRE_THROWS_AS(read_rig(tmp_path("no_such_rig.json")), IoError);
}

TEST_CASE("scene manifests round trip with their components", "[io]") {
  Scene scene = make_colorchecker_scene(WavelengthGrid::standard());
  std::string path = tmp_path("scene.json");
  write_scene(path, scene);
  Scene back = read_scene(path);
  REQUIRE(back.width == scene.width);
  REQUIRE(back.height == scene.height);
  REQUIRE(back.grid == scene.grid);
  REQUIRE(back.depth.v == scene.depth.v);
  REQUIRE(back.reflectance.values == scene.reflectance.values);
  REQUIRE(back.patches.size() == scene.patches.size());
  for (size_t i = 0; i < scene.patches.size(); ++i) {
    REQUIRE(back.patches[i].name == scene.patches[i].name);
    REQUIRE(back.patches[i].x0 == scene.patches[i].x0);
    REQUIRE(back.patches[i].y1 == scene.patches[i].y1);
  }

  SECTION("component resolution mismatches are rejected") {
    write_pfm(tmp_path("depth.pfm"), ImageGray(3, 3));
    REQUIRE_THROWS_AS(read_scene(path), ParseError);
  }
}

TEST_CASE("capture stacks round trip with metadata and frames", "[io]") {
  CaptureStack stack;
  stack.patterns = gen_reference(640, 480);
  stack.width = 6;
  stack.height = 4;
  stack.exposure = 48000.0;
  stack.intensity = 0.25;
  stack.sigma = 0.01;
  stack.seed = 321;
  for (int i = 0; i < stack.patterns.size(); ++i) {
    Image f(6, 4);
    for (size_t k = 0; k < f.v.size(); ++k)
      f.v[k] = float(rng::uniform(13, size_t(i), k, 0, 0, 0.0, 1.0));
    stack.frames.push_back(std::move(f));
  }
  std::string path = tmp_path("stack.json");
  write_stack(path, stack, "cap");
  REQUIRE(fs::exists(tmp_path("cap_white.pfm")));
  CaptureStack back = read_stack(path);
  REQUIRE(back.patterns.kind == stack.patterns.kind);
  REQUIRE(back.patterns.size() == stack.patterns.size());
  REQUIRE(back.width == stack.width);
  REQUIRE(back.exposure == stack.exposure);
  REQUIRE(back.intensity == stack.intensity);
  REQUIRE(back.sigma == stack.sigma);
  REQUIRE(back.seed == stack.seed);
  for (size_t i = 0; i < stack.frames.size(); ++i)
    REQUIRE(back.frames[i].v == stack.frames[i].v);

  SECTION("an unknown pattern kind is rejected") {
    json j = read_json(path);
    j["patterns"]["kind"] = "swizzle";
    write_json(path, j);
    REQUIRE_THROWS_AS(read_stack(path), ParseError);
  }
  SECTION("a frame count mismatch is rejected") {
    json j = read_json(path);
    j["frames"].erase(0);
    write_json(path, j);
    REQUIRE_THROWS_AS(read_stack(path), ParseError);
  }
}

TEST_CASE("efficiency sets round trip through JSON", "[io]") {
  EfficiencySet eta = EfficiencySet::shipped_default(WavelengthGrid::standard());
  std::string path = tmp_path("eta.json");
  write_eta(path, eta);
  EfficiencySet back = read_eta(path);
  for (const auto& [m, curve] : eta.eta) {
    REQUIRE(back.has(m));
    REQUIRE(back.at(m).grid == curve.grid);
    REQUIRE(back.at(m).values == curve.values);
  }

  SECTION("order keys must be integers") {
    json j = read_json(path);
    j["eta"]["wide"] = j["eta"]["0"];
    write_json(path, j);
    REQUIRE_THROWS_AS(read_eta(path), ParseError);
  }
  SECTION("a missing zero order is rejected") {
    json j = read_json(path);
    j["eta"].erase("0");
    write_json(path, j);
    REQUIRE_THROWS_AS(read_eta(path), ParseError);
  }
}

TEST_CASE("depth maps store invalid pixels as zero", "[io]") {
  DepthMap depth(5, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) {
      if ((x + y) % 3 == 0) continue;  // leave a scattering of invalid pixels
      depth.z.at(x, y) = 300.f + float(10 * x + y);
      depth.valid[depth.pix(x, y)] = 1;
    }
  std::string path = tmp_path("depth_map.pfm");
  write_depth(path, depth);
  DepthMap back = read_depth(path);
  REQUIRE(back.width == 5);
  REQUIRE(back.height == 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) {
      REQUIRE(back.valid[back.pix(x, y)] == depth.valid[depth.pix(x, y)]);
      if (depth.valid[depth.pix(x, y)])
        REQUIRE(back.z.at(x, y) == depth.z.at(x, y));
      else
        REQUIRE(back.z.at(x, y) == 0.f);
    }
}
