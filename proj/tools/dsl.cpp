// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

// dsl: command-line front end for the dispersed-structured-light toolkit.
//
// Subcommands mirror the pipeline stages: `demo` writes the shipped assets,
// `simulate` renders capture stacks, `fit-correspondence` and `calibrate`
// produce the models a reconstruction needs, `reconstruct-depth` /
// `reconstruct-hyper` invert captures, `evaluate` scores a reconstruction
// against ground truth, and `noise-sweep` reruns binary decoding across
// noise levels. Every subcommand writes a versioned metrics JSON next to its
// artifacts; identical config + seed yields byte-identical output.
//
// Exit codes: 0 success, 2 domain error, 3 parse error, 4 I/O error,
// 5 missing dependency artifact, 6 unexpected failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsl/dsl.hpp"

namespace fs = std::filesystem;
using dsl::json;

namespace {

// ---------------------------------------------------------------------------
// experiment configuration

struct Config {
  fs::path dir;  // directory of the config file; relative paths resolve here
  dsl::Rig rig;
  json scene_spec;  // path string or {"kind": ...} object
  dsl::SampleGrids grids;
  std::string model_path;  // optional pre-fit correspondence model
  int line_width = 5;
  int shift = 2;
  std::vector<double> sigmas{0.0, 0.005, 0.01, 0.02, 0.03, 0.04};
  std::vector<std::uint64_t> seeds{11, 22, 33};
  double kappa_sigma = 5.0;
  double kappa_interior = 0.9;
  double kappa_lambda = 0.005;
  double binary_exposure = 1.0;
  double scan_exposure = 1.0;
  double tau = 0.5;
  std::vector<int> orders{-1, 1};
  double plane_z = 0.0;  // calibration target depth; 0: middle of depth grid
  dsl::WavelengthGrid grid = dsl::WavelengthGrid::standard();
  dsl::ResponseSet responses = dsl::ResponseSet::shipped_default(grid);
  dsl::EfficiencySet eta = dsl::EfficiencySet::shipped_default(grid);
};

std::string join(const fs::path& dir, const std::string& name) {
  return (dir / name).string();
}

Config load_config(const std::string& path) {
  if (!fs::exists(path))
    throw dsl::DependencyError("config not found: " + path);
  json j = dsl::read_json(path);
  Config cfg;
  cfg.dir = fs::path(path).parent_path();
  if (!j.contains("rig"))
    throw dsl::ParseError(path + ": config needs a \"rig\" entry", 0);
  cfg.rig = dsl::read_rig(join(cfg.dir, j["rig"].get<std::string>()));
  if (j.contains("scene")) cfg.scene_spec = j["scene"];

  if (j.contains("grids")) {
    const json& g = j["grids"];
    int nx = g.value("nx", 13), ny = g.value("ny", 13);
    cfg.grids.pixel_xs =
        dsl::SampleGrids::linspace(0.0, cfg.rig.camera.width - 1.0, nx);
    cfg.grids.pixel_ys =
        dsl::SampleGrids::linspace(0.0, cfg.rig.camera.height - 1.0, ny);
    cfg.grids.lambdas = g.value("lambdas", cfg.grids.lambdas);
    cfg.grids.depths = g.value("depths", cfg.grids.depths);
  } else {
    cfg.grids = dsl::demo_sample_grids();
  }
  if (j.contains("model")) cfg.model_path = join(cfg.dir, j["model"]);
  if (j.contains("patterns")) {
    cfg.line_width = j["patterns"].value("line_width", cfg.line_width);
    cfg.shift = j["patterns"].value("shift", cfg.shift);
  }
  cfg.sigmas = j.value("sigmas", cfg.sigmas);
  cfg.seeds = j.value("seeds", cfg.seeds);
  if (j.contains("kappa")) {
    cfg.kappa_sigma = j["kappa"].value("sigma", cfg.kappa_sigma);
    cfg.kappa_interior = j["kappa"].value("interior", cfg.kappa_interior);
    cfg.kappa_lambda = j["kappa"].value("lambda", cfg.kappa_lambda);
  }
  if (j.contains("exposure")) {
    cfg.binary_exposure = j["exposure"].value("binary", cfg.binary_exposure);
    cfg.scan_exposure = j["exposure"].value("scan", cfg.scan_exposure);
  }
  cfg.tau = j.value("tau", cfg.tau);
  cfg.orders = j.value("orders", cfg.orders);
  cfg.plane_z = j.value("plane_z", cfg.plane_z);
  for (double s : cfg.sigmas)
    dsl::detail::require(s >= 0.0, "sigma must be non-negative");
  if (j.contains("responses"))
    cfg.responses.cam = dsl::read_response_csv(
        join(cfg.dir, j["responses"].get<std::string>()));
  if (j.contains("eta"))
    cfg.eta = dsl::read_eta(join(cfg.dir, j["eta"].get<std::string>()));
  return cfg;
}

dsl::Scene resolve_scene(const Config& cfg) {
  if (cfg.scene_spec.is_string())
    return dsl::read_scene(join(cfg.dir, cfg.scene_spec.get<std::string>()));
  if (!cfg.scene_spec.is_object())
    throw dsl::DomainError("config has no usable \"scene\" entry");
  const json& s = cfg.scene_spec;
  std::string kind = s.value("kind", "");
  int size = s.value("size", 64);
  if (kind == "colorchecker")
    return dsl::make_colorchecker_scene(cfg.grid, size, s.value("z", 400.0));
  if (kind == "filters")
    return dsl::make_filter_scene(cfg.grid, size, s.value("z", 400.0));
  if (kind == "twobox")
    return dsl::make_twobox_scene(cfg.grid, size, s.value("z", 430.0));
  if (kind == "plane")
    return dsl::make_plane_scene(s.value("width", size),
                                 s.value("height", size), cfg.grid,
                                 s.value("z", 400.0),
                                 s.value("reflectance", 0.99));
  if (kind == "random_plane")
    return dsl::make_random_plane_scene(
        s.value("width", size), s.value("height", size), cfg.grid,
        s.value("z", 400.0), s.value("seed", std::uint64_t(99)));
  throw dsl::DomainError("unknown procedural scene kind: \"" + kind + "\"");
}

dsl::CorrespondenceModel resolve_model(const Config& cfg) {
  if (!cfg.model_path.empty()) {
    if (!fs::exists(cfg.model_path))
      throw dsl::DependencyError("correspondence model not found: " +
                                 cfg.model_path);
    return dsl::read_model(cfg.model_path);
  }
  return dsl::build_correspondence_model(cfg.rig, cfg.grids, cfg.orders);
}

void write_metrics(const std::string& out_dir, json j) {
  j["schema"] = "dsl-metrics/1";
  dsl::write_json(join(out_dir, "metrics.json"), j);
}

dsl::CaptureStack require_stack(const std::string& manifest) {
  if (!fs::exists(manifest))
    throw dsl::DependencyError("capture manifest not found: " + manifest);
  return dsl::read_stack(manifest);
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_demo(const std::string& out) {
  auto grid = dsl::WavelengthGrid::standard();
  dsl::write_rig(join(out, "demo_rig.json"), dsl::make_demo_rig());
  dsl::write_rig(join(out, "sweep_rig.json"), dsl::make_sweep_rig());
  dsl::write_scene(join(out, "scenes/colorchecker/scene.json"),
                   dsl::make_colorchecker_scene(grid));
  dsl::write_scene(join(out, "scenes/filters/scene.json"),
                   dsl::make_filter_scene(grid));
  dsl::write_scene(join(out, "scenes/twobox/scene.json"),
                   dsl::make_twobox_scene(grid));
  dsl::write_eta(join(out, "eta.json"),
                 dsl::EfficiencySet::shipped_default(grid));
  auto responses = dsl::ResponseSet::shipped_default(grid);
  dsl::write_response_csv(join(out, "camera_responses.csv"), responses.cam);
  dsl::write_response_csv(join(out, "projector_responses.csv"),
                          responses.proj);

  auto demo_cfg = [&](const char* scene) {
    auto cap = dsl::demo_capture_settings();
    json c;
    c["rig"] = "demo_rig.json";
    c["scene"] = scene;
    c["grids"] = {{"nx", 13},
                  {"ny", 13},
                  {"lambdas", dsl::demo_sample_grids().lambdas},
                  {"depths", dsl::demo_sample_grids().depths}};
    c["patterns"] = {{"line_width", 5}, {"shift", 2}};
    c["exposure"] = {{"binary", cap.binary_exposure},
                     {"scan", cap.scan_exposure}};
    c["kappa"] = {{"sigma", 5.0}, {"interior", 0.9}, {"lambda", 0.005}};
    c["tau"] = 0.5;
    c["orders"] = {-1, 1};
    c["plane_z"] = 400.0;
    c["eta"] = "eta.json";
    return c;
  };
  dsl::write_json(join(out, "demo_config.json"),
                  demo_cfg("scenes/colorchecker/scene.json"));
  dsl::write_json(join(out, "filters_config.json"),
                  demo_cfg("scenes/filters/scene.json"));
  dsl::write_json(join(out, "twobox_config.json"),
                  demo_cfg("scenes/twobox/scene.json"));

  {
    auto cap = dsl::sweep_capture_settings();
    auto grids = dsl::sweep_sample_grids();
    json c;
    c["rig"] = "sweep_rig.json";
    c["scene"] = {{"kind", "random_plane"}, {"width", 320}, {"height", 320},
                  {"z", 750.0},             {"seed", 99}};
    c["grids"] = {{"nx", 9},
                  {"ny", 9},
                  {"lambdas", grids.lambdas},
                  {"depths", grids.depths}};
    c["exposure"] = {{"binary", cap.binary_exposure},
                     {"scan", cap.scan_exposure}};
    c["sigmas"] = {0.0, 0.005, 0.01, 0.02, 0.03, 0.04};
    c["seeds"] = {11, 22, 33};
    dsl::write_json(join(out, "sweep_config.json"), c);
  }
  write_metrics(out, {{"command", "demo"},
                      {"configs",
                       {"demo_config.json", "filters_config.json",
                        "twobox_config.json", "sweep_config.json"}}});
  return 0;
}

int cmd_simulate(const Config& cfg, const std::string& out, double sigma,
                 std::uint64_t seed) {
  dsl::Scene scene = resolve_scene(cfg);
  auto model = resolve_model(cfg);
  auto ctx = dsl::make_render_context(scene, cfg.rig, model, cfg.responses,
                                      cfg.eta);

  const int pw = cfg.rig.projector.width, ph = cfg.rig.projector.height;
  auto bits = dsl::gen_binary_codes(pw, ph);
  auto refs = dsl::gen_reference(pw, ph);
  auto scan = dsl::gen_scanlines(pw, ph, cfg.line_width, cfg.shift);

  dsl::RenderOptions ob, os;
  ob.exposure = cfg.binary_exposure;
  os.exposure = cfg.scan_exposure;
  auto binary = dsl::render_stack(bits, ctx, ob);
  auto reference = dsl::render_stack(refs, ctx, ob);
  auto scans = dsl::render_stack(scan, ctx, os);
  if (sigma > 0.0) {
    dsl::add_noise(binary, sigma, seed);
    dsl::add_noise(reference, sigma, seed + 1);
    dsl::add_noise(scans, sigma, seed + 2);
  }
  dsl::write_stack(join(out, "binary.json"), binary, "bin");
  dsl::write_stack(join(out, "reference.json"), reference, "ref");
  dsl::write_stack(join(out, "scan.json"), scans, "scan");
  json manifest = {{"binary", "binary.json"},
                   {"reference", "reference.json"},
                   {"scan", "scan.json"}};
  dsl::write_json(join(out, "capture.json"), manifest);
  write_metrics(out, {{"command", "simulate"},
                      {"frames_binary", bits.size()},
                      {"frames_reference", refs.size()},
                      {"frames_scan", scan.size()},
                      {"frames_total", bits.size() + refs.size() + scan.size()},
                      {"sigma", sigma},
                      {"seed", seed},
                      {"exposure", {{"binary", cfg.binary_exposure},
                                    {"scan", cfg.scan_exposure}}}});
  return 0;
}

int cmd_fit_correspondence(const Config& cfg, const std::string& out) {
  std::vector<dsl::CorrespondenceSample> samples;
  for (int m : cfg.orders)
    for (double l : cfg.grids.lambdas)
      for (double z : cfg.grids.depths)
        for (double py : cfg.grids.pixel_ys)
          for (double px : cfg.grids.pixel_xs) {
            Eigen::Vector3d sp =
                dsl::unproject({px, py}, z, cfg.rig.camera);
            try {
              auto sol = dsl::solve_grating_point(sp, cfg.rig, m, l);
              samples.push_back({px, py, z, m, l, sol.projector_px.x()});
            } catch (const dsl::Error&) {
              // off-panel or evanescent at this node; the fit tolerates holes
            }
          }
  auto model = dsl::fit_correspondence(samples, cfg.grids,
                                       cfg.rig.projector.width);
  dsl::write_samples_csv(join(out, "samples.csv"), samples);
  dsl::write_model(join(out, "model.dslc"), model);

  json per_order = json::object();
  for (size_t oi = 0; oi < model.orders.size(); ++oi) {
    const auto& fits = model.coefs[oi];
    int converged = 0, valid = 0;
    double rms_sum = 0.0, rms_max = 0.0;
    for (const auto& f : fits) {
      if (!f.valid) continue;
      ++valid;
      converged += f.converged ? 1 : 0;
      rms_sum += f.rms_residual;
      rms_max = std::max(rms_max, f.rms_residual);
    }
    per_order[std::to_string(model.orders[oi])] = {
        {"cells", fits.size()},
        {"valid", valid},
        {"converged", converged},
        {"rms_mean", valid ? rms_sum / valid : 0.0},
        {"rms_max", rms_max}};
  }
  write_metrics(out, {{"command", "fit-correspondence"},
                      {"samples", samples.size()},
                      {"orders", per_order}});
  return 0;
}

int cmd_calibrate(const Config& cfg, const std::string& out) {
  dsl::EtaCalibrationSetup setup;
  setup.rig = cfg.rig;
  setup.grid = cfg.grid;
  setup.plane_z = cfg.plane_z > 0.0
                      ? cfg.plane_z
                      : 0.5 * (cfg.grids.depths.front() +
                               cfg.grids.depths.back());
  std::vector<double> centers;
  for (double l = cfg.grid.start_nm; l <= cfg.grid.end_nm + 1e-9; l += 10.0)
    centers.push_back(l);
  // the zero order is the normalization reference; always capture it
  std::vector<int> orders = cfg.orders;
  if (std::find(orders.begin(), orders.end(), 0) == orders.end())
    orders.insert(orders.begin(), 0);
  setup.captures = dsl::plan_eta_captures(cfg.rig, centers, orders,
                                          setup.plane_z, setup.bar_width);

  auto model = resolve_model(cfg);
  auto bandpassed = [&](double center) {
    dsl::Scene s = dsl::make_plane_scene(cfg.rig.camera.width,
                                         cfg.rig.camera.height, cfg.grid,
                                         setup.plane_z,
                                         setup.target_reflectance);
    dsl::apply_bandpass(s, dsl::make_boxcar_bandpass(center,
                                                     setup.bandpass_width,
                                                     cfg.grid));
    return s;
  };
  dsl::RenderOptions opt;
  opt.exposure = cfg.binary_exposure;
  std::vector<dsl::Image> images;
  for (const auto& spec : setup.captures) {
    dsl::Scene s = bandpassed(spec.lambda_nm);
    auto ctx = dsl::make_render_context(s, cfg.rig, model, cfg.responses,
                                        cfg.eta);
    auto bar = dsl::make_bar_pattern(cfg.rig.projector.width,
                                     cfg.rig.projector.height, spec.bar_x0,
                                     setup.bar_width);
    images.push_back(dsl::render(bar, ctx, opt));
  }
  auto est = dsl::estimate_eta(images, setup);
  dsl::write_eta(join(out, "eta.json"), est.eta);

  // narrowband scanline stacks at two model knots -> correspondence samples
  std::vector<dsl::CorrespondenceSample> samples;
  dsl::ExtractDiagnostics diag;
  double order_err_sum = 0.0, order_err_max = 0.0;
  {
    std::vector<std::array<int, 2>> pixels;
    for (int y = 8; y < cfg.rig.camera.height; y += 16)
      for (int x = 8; x < cfg.rig.camera.width; x += 16)
        pixels.push_back({x, y});
    auto scan = dsl::gen_scanlines(cfg.rig.projector.width,
                                   cfg.rig.projector.height, cfg.line_width,
                                   cfg.shift);
    dsl::RenderOptions os;
    os.exposure = cfg.scan_exposure;
    for (double l : {cfg.grids.lambdas[1], cfg.grids.lambdas[4]}) {
      dsl::Scene s = bandpassed(l);
      auto ctx = dsl::make_render_context(s, cfg.rig, model, cfg.responses,
                                          cfg.eta);
      auto stack = dsl::render_stack(scan, ctx, os);
      dsl::ExtractSetup ex;
      ex.lambda_nm = l;
      ex.plane_z = setup.plane_z;
      ex.pixels = pixels;
      auto part = dsl::extract_correspondence_samples(stack, ex, &diag);
      for (const auto& smp : part) {
        if (smp.m == 0) continue;
        try {
          double q = model.query({smp.px, smp.py}, smp.z, smp.m, smp.lambda);
          double e = std::abs(q - smp.q_col);
          order_err_sum += e;
          order_err_max = std::max(order_err_max, e);
        } catch (const dsl::Error&) {
        }
      }
      samples.insert(samples.end(), part.begin(), part.end());
    }
  }
  dsl::write_samples_csv(join(out, "samples.csv"), samples);

  // response refinement at the known-target fixed point
  dsl::RefineResult refined;
  {
    auto specs = dsl::detail::checker_specs();
    std::vector<dsl::PatchObservation> obs;
    for (int i = 0; i < 6; ++i) {
      dsl::PatchObservation o{dsl::detail::patch_curve(specs[size_t(i * 4)],
                                                       cfg.grid),
                              1.0,
                              {}};
      for (int m : cfg.orders) {
        std::array<double, 3> I{};
        for (int c = 0; c < 3; ++c)
          for (int j = 0; j < cfg.grid.count; ++j)
            I[size_t(c)] += cfg.responses.cam[size_t(c)][j] *
                            o.geom_scale * o.reflectance[j] *
                            cfg.eta.at(m)[j] *
                            (cfg.responses.proj[0][j] +
                             cfg.responses.proj[1][j] +
                             cfg.responses.proj[2][j]);
        o.intensity.push_back(I);
      }
      obs.push_back(std::move(o));
    }
    dsl::RefineOptions ro;
    ro.max_iters = 200;
    refined = dsl::refine_responses(cfg.responses, obs, cfg.orders, cfg.eta,
                                    cfg.grid, ro);
    dsl::write_response_csv(join(out, "camera_responses.csv"),
                            refined.responses.cam);
    dsl::write_response_csv(join(out, "projector_responses.csv"),
                            refined.responses.proj);
  }

  json report = {
      {"schema", "dsl-calibration/1"},
      {"eta", "eta.json"},
      {"eta_captures", setup.captures.size()},
      {"eta_uncalibrated_orders", est.uncalibrated},
      {"samples", "samples.csv"},
      {"sample_count", samples.size()},
      {"extract_skipped_dark", diag.skipped_dark},
      {"extract_skipped_few_peaks", diag.skipped_few_peaks},
      {"extract_extra_peaks", diag.extra_peaks},
      {"first_order_residual_mean",
       samples.empty() ? 0.0 : order_err_sum / double(samples.size())},
      {"first_order_residual_max", order_err_max},
      {"refined_responses",
       {"camera_responses.csv", "projector_responses.csv"}},
      {"refine_loss", refined.loss},
      {"refine_data_loss", refined.data_loss},
      {"refine_iterations", refined.iterations}};
  dsl::write_json(join(out, "calibration.json"), report);
  write_metrics(out, {{"command", "calibrate"},
                      {"report", "calibration.json"},
                      {"eta_captures", setup.captures.size()},
                      {"sample_count", samples.size()}});
  return 0;
}

int cmd_reconstruct_depth(const Config& cfg, const std::string& capture,
                          const std::string& out) {
  auto binary = require_stack(join(capture, "binary.json"));
  auto reference = require_stack(join(capture, "reference.json"));
  auto dec = dsl::decode_binary(binary, &reference.frames.at(0),
                                &reference.frames.at(1), cfg.tau);
  dsl::TriangulateOptions topt;
  double span = cfg.grids.depths.back() - cfg.grids.depths.front();
  topt.z_min = cfg.grids.depths.front() - 0.15 * span;
  topt.z_max = cfg.grids.depths.back() + 0.15 * span;

  dsl::DepthMap depth(binary.width, binary.height);
  int valid = 0;
  for (int y = 0; y < binary.height; ++y)
    for (int x = 0; x < binary.width; ++x) {
      size_t i = size_t(y) * size_t(binary.width) + size_t(x);
      if (!dec.valid[i]) continue;
      auto z = dsl::triangulate({double(x), double(y)}, double(dec.col[i]),
                                cfg.rig, topt);
      if (!z) continue;
      depth.z.at(x, y) = float(*z);
      depth.valid[i] = 1;
      ++valid;
    }
  dsl::write_depth(join(out, "depth.pfm"), depth);

  json m = {{"command", "reconstruct-depth"},
            {"valid", valid},
            {"pixels", binary.width * binary.height},
            {"tau", cfg.tau}};
  if (!cfg.scene_spec.is_null()) {
    dsl::Scene scene = resolve_scene(cfg);
    auto err = dsl::depth_error(depth, scene.depth, nullptr);
    m["depth_mean_abs_mm"] = err.mean_abs;
    m["depth_median_abs_mm"] = err.median_abs;
    m["depth_rmse_mm"] = err.rmse;
  }
  write_metrics(out, m);
  return 0;
}

int cmd_reconstruct_hyper(const Config& cfg, const std::string& capture,
                          const std::string& out) {
  auto binary = require_stack(join(capture, "binary.json"));
  auto reference = require_stack(join(capture, "reference.json"));
  auto scan = require_stack(join(capture, "scan.json"));
  auto model = resolve_model(cfg);

  dsl::ReconstructOptions opt;
  opt.grid = cfg.grid;
  opt.tau = cfg.tau;
  opt.kappa_sigma = cfg.kappa_sigma;
  opt.kappa_interior = cfg.kappa_interior;
  opt.kappa_lambda = cfg.kappa_lambda;
  auto rec = dsl::reconstruct(binary, &reference.frames.at(0),
                              &reference.frames.at(1), scan, model, cfg.rig,
                              cfg.responses, cfg.eta, opt);
  dsl::write_depth(join(out, "depth.pfm"), rec.depth);
  dsl::write_cube(join(out, "cube.dslh"), rec.cube);
  dsl::ImageGray k0(rec.kappa.width, rec.kappa.height);
  dsl::ImageGray k1(rec.kappa.width, rec.kappa.height);
  k0.v = rec.kappa.k0;
  k1.v = rec.kappa.k1;
  dsl::write_pfm(join(out, "kappa0.pfm"), k0);
  dsl::write_pfm(join(out, "kappa1.pfm"), k1);
  write_metrics(out, {{"command", "reconstruct-hyper"},
                      {"depth_valid", rec.stats.depth_valid},
                      {"spectra_solved", rec.stats.spectra_solved},
                      {"solver_failures", rec.stats.solver_failures},
                      {"mean_iterations", rec.stats.mean_iterations},
                      {"kappa", {{"sigma", cfg.kappa_sigma},
                                 {"interior", cfg.kappa_interior},
                                 {"lambda", cfg.kappa_lambda}}},
                      {"tau", cfg.tau}});
  return 0;
}

int cmd_evaluate(const Config& cfg, const std::string& recon,
                 const std::string& out) {
  if (!fs::exists(join(recon, "depth.pfm")))
    throw dsl::DependencyError("reconstruction not found: " +
                               join(recon, "depth.pfm"));
  dsl::Scene scene = resolve_scene(cfg);
  auto depth = dsl::read_depth(join(recon, "depth.pfm"));

  json m = {{"command", "evaluate"}};
  auto derr = dsl::depth_error(depth, scene.depth, nullptr);
  m["depth_mean_abs_mm"] = derr.mean_abs;
  m["depth_median_abs_mm"] = derr.median_abs;
  m["depth_rmse_mm"] = derr.rmse;
  m["depth_count"] = derr.count;

  std::string cube_path = join(recon, "cube.dslh");
  if (fs::exists(cube_path)) {
    auto cube = dsl::read_cube(cube_path, cfg.grid);
    auto sm = dsl::spectral_metrics(cube, scene.reflectance, depth.valid);
    m["spectral_mean_rmse"] = sm.mean_rmse;
    m["spectral_median_rmse"] = sm.median_rmse;
    m["spectral_max_rmse"] = sm.max_rmse;
    m["spectral_mean_angle_deg"] = sm.mean_angle_deg;
    m["spectral_gt_peak"] = sm.gt_peak;
    m["spectral_frac_below_2pct_peak"] =
        sm.fraction_rmse_below(0.02 * sm.gt_peak);
    m["spectral_count"] = sm.count;

    // per-probe spectra: masked mean over each labeled patch, long format
    std::string csv = "probe,wavelength_nm,gt,est\n";
    for (const auto& p : scene.patches) {
      std::vector<double> gt(size_t(cfg.grid.count), 0.0);
      std::vector<double> estm(size_t(cfg.grid.count), 0.0);
      int n = 0;
      for (int y = p.y0; y < p.y1; ++y)
        for (int x = p.x0; x < p.x1; ++x) {
          size_t i = size_t(y) * size_t(scene.width) + size_t(x);
          if (!depth.valid[i]) continue;
          ++n;
          for (int j = 0; j < cfg.grid.count; ++j) {
            gt[size_t(j)] += scene.reflectance.at(x, y, j);
            estm[size_t(j)] += cube.at(x, y, j);
          }
        }
      if (!n) continue;
      for (int j = 0; j < cfg.grid.count; ++j) {
        csv += p.name + "," + dsl::detail::fmt_double(cfg.grid.wavelength(j)) +
               "," + dsl::detail::fmt_double(gt[size_t(j)] / n) + "," +
               dsl::detail::fmt_double(estm[size_t(j)] / n) + "\n";
      }
    }
    dsl::detail::write_file(join(out, "probe_spectra.csv"), csv);

    auto rows = dsl::fwhm_table(cube, scene, depth.valid);
    std::string ft = "probe,est_fwhm_nm,gt_fwhm_nm\n";
    double est_sum = 0.0;
    int est_n = 0;
    for (const auto& r : rows) {
      ft += r.name + "," + dsl::detail::fmt_double(r.est_nm) + "," +
            dsl::detail::fmt_double(r.gt_nm) + "\n";
      if (std::isfinite(r.est_nm)) {
        est_sum += r.est_nm;
        ++est_n;
      }
    }
    dsl::detail::write_file(join(out, "fwhm.csv"), ft);
    if (est_n) m["fwhm_mean_nm"] = est_sum / est_n;
    m["probe_spectra"] = "probe_spectra.csv";
    m["fwhm_table"] = "fwhm.csv";
  }
  write_metrics(out, m);
  return 0;
}

int cmd_noise_sweep(const Config& cfg, const std::string& out) {
  dsl::Scene scene = resolve_scene(cfg);
  auto model = resolve_model(cfg);
  auto ctx = dsl::make_render_context(scene, cfg.rig, model, cfg.responses,
                                      cfg.eta);
  const int pw = cfg.rig.projector.width, ph = cfg.rig.projector.height;
  dsl::RenderOptions ob;
  ob.exposure = cfg.binary_exposure;
  auto base = dsl::render_stack(dsl::gen_binary_codes(pw, ph), ctx, ob);
  auto refs = dsl::render_stack(dsl::gen_reference(pw, ph), ctx, ob);

  dsl::TriangulateOptions topt;
  double span = cfg.grids.depths.back() - cfg.grids.depths.front();
  topt.z_min = cfg.grids.depths.front() - 0.15 * span;
  topt.z_max = cfg.grids.depths.back() + 0.15 * span;

  const int W = cfg.rig.camera.width, H = cfg.rig.camera.height;
  std::string csv = "sigma,seed,mean_abs_mm,median_abs_mm,valid\n";
  json curve = json::array();
  for (double sigma : cfg.sigmas) {
    double mean_over_seeds = 0.0;
    int runs = 0;
    for (std::uint64_t seed : cfg.seeds) {
      dsl::CaptureStack noisy = base, nrefs = refs;
      dsl::add_noise(noisy, sigma, seed);
      dsl::add_noise(nrefs, sigma, seed + 1);
      auto dec = dsl::decode_binary(noisy, &nrefs.frames[0], &nrefs.frames[1],
                                    cfg.tau);
      dsl::DepthMap depth(W, H);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          size_t i = size_t(y) * size_t(W) + size_t(x);
          if (!dec.valid[i]) continue;
          auto z = dsl::triangulate({double(x), double(y)},
                                    double(dec.col[i]), cfg.rig, topt);
          if (!z) continue;
          depth.z.at(x, y) = float(*z);
          depth.valid[i] = 1;
        }
      auto err = dsl::depth_error(depth, scene.depth, nullptr);
      csv += dsl::detail::fmt_double(sigma) + "," + std::to_string(seed) +
             "," + dsl::detail::fmt_double(err.mean_abs) + "," +
             dsl::detail::fmt_double(err.median_abs) + "," +
             std::to_string(err.count) + "\n";
      mean_over_seeds += err.mean_abs;
      ++runs;
      if (sigma == 0.0) break;  // noiseless run is seed-independent
    }
    curve.push_back({{"sigma", sigma},
                     {"mean_abs_mm", mean_over_seeds / runs}});
  }
  dsl::detail::write_file(join(out, "noise_sweep.csv"), csv);
  bool monotone = true;
  for (size_t i = 1; i < curve.size(); ++i)
    monotone = monotone && curve[i]["mean_abs_mm"].get<double>() >=
                               curve[i - 1]["mean_abs_mm"].get<double>();
  write_metrics(out, {{"command", "noise-sweep"},
                      {"curve", curve},
                      {"monotone_non_decreasing", monotone},
                      {"csv", "noise_sweep.csv"}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "dsl: dispersed-structured-light simulation, calibration and "
      "reconstruction"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", capture_dir, recon_dir;
  std::vector<double> sigma_flag;
  std::vector<int> orders_flag;
  std::optional<std::uint64_t> seed_flag;
  std::optional<double> kappa_lambda_flag, tau_flag;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", config_path,
                              "experiment config JSON");
    if (needs_config) c->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed_flag, "override the config seed list");
    sub->add_option("--sigma", sigma_flag,
                    "override the config noise levels")
        ->delimiter(',');
    sub->add_option("--kappa-lambda", kappa_lambda_flag,
                    "override the spectral smoothness weight");
    sub->add_option("--tau", tau_flag, "override the decode threshold");
    sub->add_option("--orders", orders_flag, "override the diffraction orders")
        ->delimiter(',');
  };

  auto* demo = app.add_subcommand("demo", "write the shipped demo assets");
  demo->add_option("--out", out_dir, "output directory");

  auto* simulate =
      app.add_subcommand("simulate", "render capture stacks for a scene");
  add_common(simulate, true);
  auto* fit = app.add_subcommand("fit-correspondence",
                                 "fit the dispersed correspondence model");
  add_common(fit, true);
  auto* calibrate = app.add_subcommand(
      "calibrate", "estimate efficiencies and extract samples");
  add_common(calibrate, true);
  auto* rdepth = app.add_subcommand("reconstruct-depth",
                                    "decode and triangulate a capture");
  add_common(rdepth, true);
  rdepth->add_option("--capture", capture_dir, "capture directory")
      ->required();
  auto* rhyper = app.add_subcommand("reconstruct-hyper",
                                    "full depth + spectra reconstruction");
  add_common(rhyper, true);
  rhyper->add_option("--capture", capture_dir, "capture directory")
      ->required();
  auto* evaluate = app.add_subcommand("evaluate",
                                      "score a reconstruction against truth");
  add_common(evaluate, true);
  evaluate->add_option("--recon", recon_dir, "reconstruction directory")
      ->required();
  auto* sweep = app.add_subcommand("noise-sweep",
                                   "binary decoding error vs noise level");
  add_common(sweep, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (demo->parsed()) return cmd_demo(out_dir);

    Config cfg = load_config(config_path);
    if (seed_flag) cfg.seeds = {*seed_flag};
    if (!sigma_flag.empty()) cfg.sigmas = sigma_flag;
    if (kappa_lambda_flag) cfg.kappa_lambda = *kappa_lambda_flag;
    if (tau_flag) cfg.tau = *tau_flag;
    if (!orders_flag.empty()) cfg.orders = orders_flag;

    if (simulate->parsed()) {
      // noiseless unless --sigma is given; config sigma lists drive sweeps
      double sigma = sigma_flag.empty() ? 0.0 : sigma_flag.front();
      return cmd_simulate(cfg, out_dir, sigma,
                          cfg.seeds.empty() ? 0 : cfg.seeds.front());
    }
    if (fit->parsed()) return cmd_fit_correspondence(cfg, out_dir);
    if (calibrate->parsed()) return cmd_calibrate(cfg, out_dir);
    if (rdepth->parsed())
      return cmd_reconstruct_depth(cfg, capture_dir, out_dir);
    if (rhyper->parsed())
      return cmd_reconstruct_hyper(cfg, capture_dir, out_dir);
    if (evaluate->parsed()) return cmd_evaluate(cfg, recon_dir, out_dir);
    if (sweep->parsed()) return cmd_noise_sweep(cfg, out_dir);
  } catch (const dsl::ParseError& e) {
    std::fprintf(stderr, "error(parse): %s\n", e.what());
    return 3;
  } catch (const dsl::DependencyError& e) {
    std::fprintf(stderr, "error(dependency): %s\n", e.what());
    return 5;
  } catch (const dsl::IoError& e) {
    std::fprintf(stderr, "error(io): %s\n", e.what());
    return 4;
  } catch (const dsl::Error& e) {
    std::fprintf(stderr, "error(domain): %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error(internal): %s\n", e.what());
    return 6;
  }
  return 0;
}
