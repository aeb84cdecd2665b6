// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef DSL_IO_HPP
#define DSL_IO_HPP

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dsl/correspondence.hpp"
#include "dsl/forward_sim.hpp"
#include "dsl/geometry.hpp"
#include "dsl/image.hpp"
#include "dsl/patterns.hpp"
#include "dsl/reconstruction.hpp"
#include "dsl/scene.hpp"
#include "dsl/spectral.hpp"

namespace dsl {

namespace detail {

// ---- little-endian binary primitives --------------------------------------

template <class T>
inline void put_le(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(std::begin(b), std::end(b));
  out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

struct ByteReader {
  std::string path;
  std::vector<unsigned char> buf;
  std::uint64_t pos = 0;

  explicit ByteReader(const std::string& p) : path(p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open " + p);
    f.seekg(0, std::ios::end);
    auto n = f.tellg();
    f.seekg(0, std::ios::beg);
    buf.resize(size_t(n));
    if (n > 0) f.read(reinterpret_cast<char*>(buf.data()), n);
    if (!f) throw IoError("cannot read " + p);
  }

  void need(std::uint64_t n) const {
    if (pos + n > buf.size())
      throw ParseError(path + ": truncated file", pos);
  }
  template <class T>
  T scalar() {
    need(sizeof(T));
    unsigned char b[sizeof(T)];
    std::memcpy(b, buf.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
      std::reverse(std::begin(b), std::end(b));
    T v;
    std::memcpy(&v, b, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string bytes(std::uint64_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), size_t(n));
    pos += n;
    return s;
  }
  void expect_magic(const char* magic) {
    std::uint64_t at = pos;
    if (bytes(std::strlen(magic)) != magic)
      throw ParseError(path + ": bad magic, expected " + magic, at);
  }
  bool at_end() const { return pos == buf.size(); }
};

inline void write_file(const std::string& path, const std::string& data) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(data.data(), std::streamsize(data.size()));
  if (!f) throw IoError("cannot write " + path);
}

inline std::string fmt_double(double v) {
  char b[40];
  std::snprintf(b, sizeof(b), "%.17g", v);
  return b;
}

// ---- tiny CSV tokenizer with byte offsets ----------------------------------

struct CsvReader {
  std::string path;
  std::string text;
  std::uint64_t pos = 0;

  explicit CsvReader(const std::string& p) : path(p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open " + p);
    std::string s((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
    text = std::move(s);
  }

  bool eof() const { return pos >= text.size(); }

  // returns false at end of input; line excludes the newline
  bool next_line(std::string& line, std::uint64_t& line_start) {
    if (eof()) return false;
    line_start = pos;
    size_t nl = text.find('\n', size_t(pos));
    if (nl == std::string::npos) {
      line = text.substr(size_t(pos));
      pos = text.size();
    } else {
      line = text.substr(size_t(pos), nl - size_t(pos));
      pos = nl + 1;
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  std::vector<double> numbers(const std::string& line, std::uint64_t start,
                              size_t expect) {
    std::vector<double> out;
    size_t at = 0;
    while (at <= line.size()) {
      size_t comma = line.find(',', at);
      std::string field = line.substr(
          at, comma == std::string::npos ? std::string::npos : comma - at);
      char* end = nullptr;
      const char* cs = field.c_str();
      double v = std::strtod(cs, &end);
      if (end == cs || *end != '\0')
        throw ParseError(path + ": expected a number", start + at);
      out.push_back(v);
      if (comma == std::string::npos) break;
      at = comma + 1;
    }
    if (out.size() != expect)
      throw ParseError(path + ": expected " + std::to_string(expect) +
                           " fields, got " + std::to_string(out.size()),
                       start);
    return out;
  }
};

inline WavelengthGrid grid_from_samples(const std::vector<double>& ls,
                                        const std::string& path) {
  if (ls.size() < 2) throw ParseError(path + ": need at least 2 samples", 0);
  double step = ls[1] - ls[0];
  for (size_t i = 1; i < ls.size(); ++i)
    if (std::abs(ls[i] - ls[i - 1] - step) > 1e-9)
      throw ParseError(path + ": wavelengths must be uniformly spaced", 0);
  return WavelengthGrid(ls.front(), ls.back(), step);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PFM images (scale -1.0: little-endian; rows stored bottom-up per convention)
// ---------------------------------------------------------------------------

inline void write_pfm(const std::string& path, const Image& img) {
  std::string out;
  out += "PF\n" + std::to_string(img.width) + " " +
         std::to_string(img.height) + "\n-1.0\n";
  out.reserve(out.size() + img.v.size() * 4);
  for (int y = img.height - 1; y >= 0; --y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) detail::put_le(out, img.at(x, y, c));
  detail::write_file(path, out);
}

inline void write_pfm(const std::string& path, const ImageGray& img) {
  std::string out;
  out += "Pf\n" + std::to_string(img.width) + " " +
         std::to_string(img.height) + "\n-1.0\n";
  out.reserve(out.size() + img.v.size() * 4);
  for (int y = img.height - 1; y >= 0; --y)
    for (int x = 0; x < img.width; ++x) detail::put_le(out, img.at(x, y));
  detail::write_file(path, out);
}

namespace detail {

struct PfmHeader {
  bool color = false;
  int width = 0, height = 0;
  bool little = true;
};

inline PfmHeader read_pfm_header(ByteReader& r) {
  PfmHeader h;
  auto token = [&r]() {
    // skip whitespace, collect non-whitespace
    while (r.pos < r.buf.size() && std::isspace(r.buf[size_t(r.pos)])) ++r.pos;
    std::uint64_t start = r.pos;
    while (r.pos < r.buf.size() && !std::isspace(r.buf[size_t(r.pos)]))
      ++r.pos;
    if (r.pos == start) throw ParseError(r.path + ": truncated header", start);
    return std::string(reinterpret_cast<const char*>(r.buf.data() + start),
                       size_t(r.pos - start));
  };
  std::string magic = token();
  if (magic == "PF")
    h.color = true;
  else if (magic == "Pf")
    h.color = false;
  else
    throw ParseError(r.path + ": not a PFM file", 0);
  try {
    h.width = std::stoi(token());
    h.height = std::stoi(token());
  } catch (const std::exception&) {
    throw ParseError(r.path + ": bad dimensions", r.pos);
  }
  if (h.width <= 0 || h.height <= 0)
    throw ParseError(r.path + ": bad dimensions", r.pos);
  double scale = std::strtod(token().c_str(), nullptr);
  if (scale == 0.0) throw ParseError(r.path + ": bad scale", r.pos);
  h.little = scale < 0.0;
  // exactly one whitespace byte separates header and data
  r.need(1);
  ++r.pos;
  return h;
}

inline float pfm_float(ByteReader& r, bool little) {
  r.need(4);
  unsigned char b[4];
  std::memcpy(b, r.buf.data() + r.pos, 4);
  r.pos += 4;
  bool host_little = std::endian::native == std::endian::little;
  if (little != host_little) std::reverse(std::begin(b), std::end(b));
  float v;
  std::memcpy(&v, b, 4);
  return v;
}

}  // namespace detail

inline Image read_pfm(const std::string& path) {
  detail::ByteReader r(path);
  detail::PfmHeader h = detail::read_pfm_header(r);
  if (!h.color)
    throw ParseError(path + ": expected a 3-channel PFM", 0);
  Image img(h.width, h.height);
  for (int y = h.height - 1; y >= 0; --y)
    for (int x = 0; x < h.width; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(x, y, c) = detail::pfm_float(r, h.little);
  return img;
}

inline ImageGray read_pfm_gray(const std::string& path) {
  detail::ByteReader r(path);
  detail::PfmHeader h = detail::read_pfm_header(r);
  if (h.color)
    throw ParseError(path + ": expected a 1-channel PFM", 0);
  ImageGray img(h.width, h.height);
  for (int y = h.height - 1; y >= 0; --y)
    for (int x = 0; x < h.width; ++x)
      img.at(x, y) = detail::pfm_float(r, h.little);
  return img;
}

// ---------------------------------------------------------------------------
// DSLH hyperspectral cubes
// ---------------------------------------------------------------------------

inline void write_cube(const std::string& path, const SpectralCube& cube) {
  std::string out = "DSLH";
  detail::put_le<std::uint32_t>(out, 1);  // version
  detail::put_le<std::uint32_t>(out, std::uint32_t(cube.width));
  detail::put_le<std::uint32_t>(out, std::uint32_t(cube.height));
  detail::put_le<std::uint32_t>(out, std::uint32_t(cube.grid.count));
  out.reserve(out.size() + cube.values.size() * 4);
  for (float v : cube.values) detail::put_le(out, v);
  detail::write_file(path, out);
}

/// The blob stores only W, H and the channel count; the wavelength grid is
/// carried by manifests, so the caller must supply a grid of matching length.
inline SpectralCube read_cube(const std::string& path,
                              const WavelengthGrid& grid) {
  detail::ByteReader r(path);
  r.expect_magic("DSLH");
  std::uint32_t version = r.scalar<std::uint32_t>();
  if (version != 1)
    throw ParseError(path + ": unsupported version", r.pos - 4);
  std::uint32_t w = r.scalar<std::uint32_t>();
  std::uint32_t h = r.scalar<std::uint32_t>();
  std::uint32_t n = r.scalar<std::uint32_t>();
  if (w == 0 || h == 0 || n == 0 || w > (1u << 20) || h > (1u << 20))
    throw ParseError(path + ": bad dimensions", 8);
  if (int(n) != grid.count)
    throw ParseError(path + ": channel count does not match the grid " +
                         std::to_string(n) + " vs " +
                         std::to_string(grid.count),
                     16);
  SpectralCube cube(int(w), int(h), grid);
  for (auto& v : cube.values) v = r.scalar<float>();
  if (!r.at_end())
    throw ParseError(path + ": trailing bytes", r.pos);
  return cube;
}

// ---------------------------------------------------------------------------
// Spectral CSVs
// ---------------------------------------------------------------------------

inline void write_spectral_csv(const std::string& path,
                               const SpectralCurve& curve) {
  std::string out = "wavelength_nm,value\n";
  for (int j = 0; j < curve.grid.count; ++j)
    out += detail::fmt_double(curve.grid.wavelength(j)) + "," +
           detail::fmt_double(curve.values[size_t(j)]) + "\n";
  detail::write_file(path, out);
}

inline SpectralCurve read_spectral_csv(const std::string& path) {
  detail::CsvReader r(path);
  std::string line;
  std::uint64_t at;
  if (!r.next_line(line, at) || line != "wavelength_nm,value")
    throw ParseError(path + ": expected header wavelength_nm,value", 0);
  std::vector<double> ls, vs;
  while (r.next_line(line, at)) {
    if (line.empty()) continue;
    auto f = r.numbers(line, at, 2);
    ls.push_back(f[0]);
    vs.push_back(f[1]);
  }
  WavelengthGrid grid = detail::grid_from_samples(ls, path);
  return SpectralCurve(grid, std::move(vs));
}

/// Trichromatic response table, `wavelength_nm,r,g,b`.
inline void write_response_csv(const std::string& path,
                               const std::array<SpectralCurve, 3>& rgb) {
  detail::require(rgb[0].grid == rgb[1].grid && rgb[1].grid == rgb[2].grid,
                  "response curves must share a grid");
  std::string out = "wavelength_nm,r,g,b\n";
  for (int j = 0; j < rgb[0].grid.count; ++j) {
    out += detail::fmt_double(rgb[0].grid.wavelength(j));
    for (int c = 0; c < 3; ++c)
      out += "," + detail::fmt_double(rgb[size_t(c)].values[size_t(j)]);
    out += "\n";
  }
  detail::write_file(path, out);
}

inline std::array<SpectralCurve, 3> read_response_csv(
    const std::string& path) {
  detail::CsvReader r(path);
  std::string line;
  std::uint64_t at;
  if (!r.next_line(line, at) || line != "wavelength_nm,r,g,b")
    throw ParseError(path + ": expected header wavelength_nm,r,g,b", 0);
  std::vector<double> ls;
  std::array<std::vector<double>, 3> vs;
  while (r.next_line(line, at)) {
    if (line.empty()) continue;
    auto f = r.numbers(line, at, 4);
    ls.push_back(f[0]);
    for (int c = 0; c < 3; ++c) vs[size_t(c)].push_back(f[size_t(c) + 1]);
  }
  WavelengthGrid grid = detail::grid_from_samples(ls, path);
  return {SpectralCurve(grid, std::move(vs[0])),
          SpectralCurve(grid, std::move(vs[1])),
          SpectralCurve(grid, std::move(vs[2]))};
}

// ---------------------------------------------------------------------------
// Correspondence samples CSV
// ---------------------------------------------------------------------------

inline void write_samples_csv(const std::string& path,
                              const std::vector<CorrespondenceSample>& ss) {
  std::string out = "px,py,z_mm,m,lambda_nm,q_col\n";
  for (const auto& s : ss) {
    out += detail::fmt_double(s.px) + "," + detail::fmt_double(s.py) + "," +
           detail::fmt_double(s.z) + "," + std::to_string(s.m) + "," +
           detail::fmt_double(s.lambda) + "," + detail::fmt_double(s.q_col) +
           "\n";
  }
  detail::write_file(path, out);
}

inline std::vector<CorrespondenceSample> read_samples_csv(
    const std::string& path) {
  detail::CsvReader r(path);
  std::string line;
  std::uint64_t at;
  if (!r.next_line(line, at) || line != "px,py,z_mm,m,lambda_nm,q_col")
    throw ParseError(path + ": expected header px,py,z_mm,m,lambda_nm,q_col",
                     0);
  std::vector<CorrespondenceSample> out;
  while (r.next_line(line, at)) {
    if (line.empty()) continue;
    auto f = r.numbers(line, at, 6);
    CorrespondenceSample s;
    s.px = f[0];
    s.py = f[1];
    s.z = f[2];
    s.m = int(std::lround(f[3]));
    if (double(s.m) != f[3])
      throw ParseError(path + ": order must be an integer", at);
    s.lambda = f[4];
    s.q_col = f[5];
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// DSLC correspondence model blob
//
// Layout (all integers u32/i32, all floats f64, little-endian):
//   "DSLC" | version=1
//   nx, xs[nx] | ny, ys[ny] | nl, lambdas[nl] | nz, depths[nz]
//   projector_width
//   z_margin_frac, lambda_margin_nm, pixel_margin_cells
//   n_orders, then per order:
//     m, then nodes*nl records ordered ((iy*nx+ix)*nl+il):
//       alpha, beta, gamma, rms_residual, converged u8, valid u8
// ---------------------------------------------------------------------------

inline void write_model(const std::string& path,
                        const CorrespondenceModel& model) {
  std::string out = "DSLC";
  detail::put_le<std::uint32_t>(out, 1);
  auto put_grid = [&out](const std::vector<double>& v) {
    detail::put_le<std::uint32_t>(out, std::uint32_t(v.size()));
    for (double x : v) detail::put_le(out, x);
  };
  put_grid(model.grids.pixel_xs);
  put_grid(model.grids.pixel_ys);
  put_grid(model.grids.lambdas);
  put_grid(model.grids.depths);
  detail::put_le<std::uint32_t>(out, std::uint32_t(model.projector_width));
  detail::put_le(out, model.z_margin_frac);
  detail::put_le(out, model.lambda_margin_nm);
  detail::put_le(out, model.pixel_margin_cells);
  detail::put_le<std::uint32_t>(out, std::uint32_t(model.orders.size()));
  for (size_t o = 0; o < model.orders.size(); ++o) {
    detail::put_le<std::int32_t>(out, model.orders[o]);
    for (const PowerLawFit& f : model.coefs[o]) {
      detail::put_le(out, f.alpha);
      detail::put_le(out, f.beta);
      detail::put_le(out, f.gamma);
      detail::put_le(out, f.rms_residual);
      detail::put_le<std::uint8_t>(out, f.converged ? 1 : 0);
      detail::put_le<std::uint8_t>(out, f.valid ? 1 : 0);
    }
  }
  detail::write_file(path, out);
}

inline CorrespondenceModel read_model(const std::string& path) {
  detail::ByteReader r(path);
  r.expect_magic("DSLC");
  std::uint32_t version = r.scalar<std::uint32_t>();
  if (version != 1)
    throw ParseError(path + ": unsupported version", r.pos - 4);
  auto get_grid = [&r, &path]() {
    std::uint32_t n = r.scalar<std::uint32_t>();
    if (n == 0 || n > (1u << 24))
      throw ParseError(path + ": bad grid length", r.pos - 4);
    std::vector<double> v(n);
    for (auto& x : v) x = r.scalar<double>();
    return v;
  };
  CorrespondenceModel model;
  model.grids.pixel_xs = get_grid();
  model.grids.pixel_ys = get_grid();
  model.grids.lambdas = get_grid();
  model.grids.depths = get_grid();
  model.projector_width = int(r.scalar<std::uint32_t>());
  model.z_margin_frac = r.scalar<double>();
  model.lambda_margin_nm = r.scalar<double>();
  model.pixel_margin_cells = r.scalar<double>();
  std::uint32_t n_orders = r.scalar<std::uint32_t>();
  if (n_orders > 16)
    throw ParseError(path + ": implausible order count", r.pos - 4);
  const size_t nodes = model.grids.pixel_xs.size() *
                       model.grids.pixel_ys.size() *
                       model.grids.lambdas.size();
  for (std::uint32_t o = 0; o < n_orders; ++o) {
    int m = int(r.scalar<std::int32_t>());
    std::vector<PowerLawFit> fits(nodes);
    for (auto& f : fits) {
      f.alpha = r.scalar<double>();
      f.beta = r.scalar<double>();
      f.gamma = r.scalar<double>();
      f.rms_residual = r.scalar<double>();
      f.converged = r.scalar<std::uint8_t>() != 0;
      f.valid = r.scalar<std::uint8_t>() != 0;
    }
    model.orders.push_back(m);
    model.coefs.push_back(std::move(fits));
  }
  if (!r.at_end()) throw ParseError(path + ": trailing bytes", r.pos);
  try {
    model.grids.validate();
    detail::require(model.projector_width > 0, "bad projector width");
  } catch (const Error& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
  return model;
}

// ---------------------------------------------------------------------------
// JSON manifests (rigs, scenes, capture stacks)
// ---------------------------------------------------------------------------

using json = nlohmann::json;

inline json read_json(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), e.byte);
  }
}

inline void write_json(const std::string& path, const json& j) {
  detail::write_file(path, j.dump(2) + "\n");
}

namespace detail {

inline json pinhole_to_json(const PinholeModel& m) {
  json j;
  j["fx"] = m.fx;
  j["fy"] = m.fy;
  j["cx"] = m.cx;
  j["cy"] = m.cy;
  j["width"] = m.width;
  j["height"] = m.height;
  std::vector<double> rot(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[size_t(r * 3 + c)] = m.rotation(r, c);
  j["rotation"] = rot;
  j["translation"] = {m.translation.x(), m.translation.y(),
                      m.translation.z()};
  if (m.distortion)
    j["distortion"] = {{"k1", m.distortion->k1}, {"k2", m.distortion->k2}};
  return j;
}

inline PinholeModel pinhole_from_json(const json& j, const std::string& path) {
  try {
    PinholeModel m;
    m.fx = j.at("fx").get<double>();
    m.fy = j.at("fy").get<double>();
    m.cx = j.at("cx").get<double>();
    m.cy = j.at("cy").get<double>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    auto rot = j.at("rotation").get<std::vector<double>>();
    if (rot.size() != 9)
      throw ParseError(path + ": rotation must have 9 entries", 0);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m.rotation(r, c) = rot[size_t(r * 3 + c)];
    auto t = j.at("translation").get<std::vector<double>>();
    if (t.size() != 3)
      throw ParseError(path + ": translation must have 3 entries", 0);
    m.translation = Eigen::Vector3d(t[0], t[1], t[2]);
    if (j.contains("distortion")) {
      RadialDistortion d;
      d.k1 = j.at("distortion").at("k1").get<double>();
      d.k2 = j.at("distortion").at("k2").get<double>();
      m.distortion = d;
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
}

inline std::string sibling(const std::string& manifest_path,
                           const std::string& name) {
  std::filesystem::path p(manifest_path);
  return (p.parent_path() / name).string();
}

}  // namespace detail

inline void write_rig(const std::string& path, const Rig& rig) {
  json j;
  j["camera"] = detail::pinhole_to_json(rig.camera);
  j["projector"] = detail::pinhole_to_json(rig.projector);
  j["grating"] = {{"groove_density_per_nm", rig.grating.groove_density},
                  {"plane_offset_mm", rig.grating.plane_offset_mm},
                  {"orders", rig.grating.orders}};
  write_json(path, j);
}

inline Rig read_rig(const std::string& path) {
  json j = read_json(path);
  Rig rig;
  try {
    rig.camera = detail::pinhole_from_json(j.at("camera"), path);
    rig.projector = detail::pinhole_from_json(j.at("projector"), path);
    const json& g = j.at("grating");
    rig.grating.groove_density = g.at("groove_density_per_nm").get<double>();
    rig.grating.plane_offset_mm = g.at("plane_offset_mm").get<double>();
    rig.grating.orders = g.at("orders").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
  try {
    rig.validate();
  } catch (const Error& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
  return rig;
}

/// Writes the manifest next to a depth PFM and a reflectance DSLH.
inline void write_scene(const std::string& manifest_path, const Scene& scene,
                        const std::string& depth_name = "depth.pfm",
                        const std::string& cube_name = "reflectance.dslh") {
  write_pfm(detail::sibling(manifest_path, depth_name), scene.depth);
  write_cube(detail::sibling(manifest_path, cube_name), scene.reflectance);
  json j;
  j["width"] = scene.width;
  j["height"] = scene.height;
  j["grid"] = {{"start_nm", scene.grid.start_nm},
               {"end_nm", scene.grid.end_nm},
               {"step_nm", scene.grid.step_nm}};
  j["depth"] = depth_name;
  j["cube"] = cube_name;
  json patches = json::array();
  for (const auto& p : scene.patches)
    patches.push_back({{"name", p.name},
                       {"x0", p.x0},
                       {"y0", p.y0},
                       {"x1", p.x1},
                       {"y1", p.y1}});
  j["patches"] = patches;
  write_json(manifest_path, j);
}

inline Scene read_scene(const std::string& manifest_path) {
  json j = read_json(manifest_path);
  try {
    WavelengthGrid grid(j.at("grid").at("start_nm").get<double>(),
                        j.at("grid").at("end_nm").get<double>(),
                        j.at("grid").at("step_nm").get<double>());
    Scene scene(j.at("width").get<int>(), j.at("height").get<int>(), grid);
    scene.depth = read_pfm_gray(
        detail::sibling(manifest_path, j.at("depth").get<std::string>()));
    scene.reflectance = read_cube(
        detail::sibling(manifest_path, j.at("cube").get<std::string>()),
        grid);
    if (scene.depth.width != scene.width ||
        scene.depth.height != scene.height ||
        scene.reflectance.width != scene.width ||
        scene.reflectance.height != scene.height)
      throw ParseError(manifest_path + ": component resolution mismatch", 0);
    for (const auto& p : j.value("patches", json::array())) {
      ScenePatch sp;
      sp.name = p.at("name").get<std::string>();
      sp.x0 = p.at("x0").get<int>();
      sp.y0 = p.at("y0").get<int>();
      sp.x1 = p.at("x1").get<int>();
      sp.y1 = p.at("y1").get<int>();
      scene.patches.push_back(std::move(sp));
    }
    scene.validate();
    return scene;
  } catch (const json::exception& e) {
    throw ParseError(manifest_path + ": " + e.what(), 0);
  } catch (const DomainError& e) {
    throw ParseError(manifest_path + ": " + e.what(), 0);
  }
}

namespace detail {

inline json patterns_to_json(const PatternSet& set) {
  json j;
  j["kind"] = to_string(set.kind);
  j["width"] = set.width;
  j["height"] = set.height;
  if (set.kind == PatternKind::binary) {
    j["col_bits"] = set.col_bits;
    j["row_bits"] = set.row_bits;
  } else if (set.kind == PatternKind::scanline) {
    j["line_width"] = set.scan.line_width;
    j["shift"] = set.scan.shift;
  }
  return j;
}

inline PatternSet patterns_from_json(const json& j, const std::string& path) {
  const std::string kind = j.at("kind").get<std::string>();
  const int w = j.at("width").get<int>(), h = j.at("height").get<int>();
  if (kind == "binary") return gen_binary_codes(w, h);
  if (kind == "scanline")
    return gen_scanlines(w, h, j.at("line_width").get<int>(),
                         j.at("shift").get<int>());
  if (kind == "reference") return gen_reference(w, h);
  throw ParseError(path + ": unknown pattern kind " + kind, 0);
}

}  // namespace detail

/// Writes every frame as prefix_<name>.pfm plus a manifest listing them.
inline void write_stack(const std::string& manifest_path,
                        const CaptureStack& stack,
                        const std::string& prefix = "frame") {
  stack.validate();
  json j;
  j["patterns"] = detail::patterns_to_json(stack.patterns);
  j["sigma"] = stack.sigma;
  j["seed"] = stack.seed;
  j["exposure"] = stack.exposure;
  j["intensity"] = stack.intensity;
  j["width"] = stack.width;
  j["height"] = stack.height;
  json frames = json::array();
  for (int i = 0; i < int(stack.frames.size()); ++i) {
    std::string name = prefix + "_" + stack.patterns.frame_name(i) + ".pfm";
    write_pfm(detail::sibling(manifest_path, name),
              stack.frames[size_t(i)]);
    frames.push_back(name);
  }
  j["frames"] = frames;
  write_json(manifest_path, j);
}

inline CaptureStack read_stack(const std::string& manifest_path) {
  json j = read_json(manifest_path);
  CaptureStack stack;
  try {
    stack.patterns = detail::patterns_from_json(j.at("patterns"),
                                                manifest_path);
    stack.sigma = j.at("sigma").get<double>();
    stack.seed = j.at("seed").get<std::uint64_t>();
    stack.exposure = j.at("exposure").get<double>();
    stack.intensity = j.at("intensity").get<double>();
    stack.width = j.at("width").get<int>();
    stack.height = j.at("height").get<int>();
    for (const auto& name : j.at("frames"))
      stack.frames.push_back(read_pfm(
          detail::sibling(manifest_path, name.get<std::string>())));
  } catch (const json::exception& e) {
    throw ParseError(manifest_path + ": " + e.what(), 0);
  }
  try {
    stack.validate();
  } catch (const Error& e) {
    throw ParseError(manifest_path + ": " + e.what(), 0);
  }
  return stack;
}

/// Diffraction efficiencies as JSON: per-order value arrays on one grid.
inline void write_eta(const std::string& path, const EfficiencySet& eta) {
  eta.validate();
  json j;
  const WavelengthGrid& grid = eta.at(0).grid;
  j["grid"] = {{"start_nm", grid.start_nm},
               {"end_nm", grid.end_nm},
               {"step_nm", grid.step_nm}};
  json vals = json::object();
  for (const auto& [m, curve] : eta.eta) {
    detail::require(curve.grid == grid, "eta curves must share a grid");
    vals[std::to_string(m)] = curve.values;
  }
  j["eta"] = vals;
  write_json(path, j);
}

inline EfficiencySet read_eta(const std::string& path) {
  json j = read_json(path);
  EfficiencySet set;
  try {
    WavelengthGrid grid(j.at("grid").at("start_nm").get<double>(),
                        j.at("grid").at("end_nm").get<double>(),
                        j.at("grid").at("step_nm").get<double>());
    for (const auto& [key, vals] : j.at("eta").items()) {
      int m = std::stoi(key);
      set.eta.emplace(m,
                      SpectralCurve(grid, vals.get<std::vector<double>>()));
    }
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what(), 0);
  } catch (const std::invalid_argument&) {
    throw ParseError(path + ": order keys must be integers", 0);
  }
  try {
    set.validate();
  } catch (const Error& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
  return set;
}

/// Depth maps travel as a pair: a gray PFM of z in mm, zero where invalid.
inline void write_depth(const std::string& path, const DepthMap& depth) {
  ImageGray img(depth.width, depth.height);
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x)
      img.at(x, y) = depth.valid[depth.pix(x, y)] ? depth.z.at(x, y) : 0.f;
  write_pfm(path, img);
}

inline DepthMap read_depth(const std::string& path) {
  ImageGray img = read_pfm_gray(path);
  DepthMap depth(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      float v = img.at(x, y);
      if (v > 0.f) {
        depth.z.at(x, y) = v;
        depth.valid[depth.pix(x, y)] = 1;
      }
    }
  return depth;
}

}  // namespace dsl

#endif  // DSL_IO_HPP
