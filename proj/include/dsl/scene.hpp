// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef DSL_SCENE_HPP
#define DSL_SCENE_HPP

#include <string>
#include <vector>

#include "dsl/common.hpp"
#include "dsl/image.hpp"
#include "dsl/spectral.hpp"

namespace dsl {

/// Axis-aligned pixel region, half-open.
struct ScenePatch {
  std::string name;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

/// Ground truth for simulation: per-camera-pixel depth and reflectance.
/// Depth <= 0 marks pixels with no geometry (rendered black, never decoded).
struct Scene {
  int width = 0, height = 0;
  WavelengthGrid grid;
  ImageGray depth;          // mm
  SpectralCube reflectance; // unitless, in [0, 1.5]
  std::vector<ScenePatch> patches;

  Scene() = default;
  Scene(int w, int h, const WavelengthGrid& g)
      : width(w), height(h), grid(g), depth(w, h, 0.f),
        reflectance(w, h, g, 0.f) {}

  bool has_depth(int x, int y) const { return depth.at(x, y) > 0.f; }

  void validate() const {
    detail::require(width > 0 && height > 0, "scene resolution positive");
    detail::require(depth.width == width && depth.height == height,
                    "depth map shape mismatch");
    detail::require(reflectance.width == width &&
                        reflectance.height == height &&
                        reflectance.grid == grid,
                    "reflectance cube shape mismatch");
    for (float v : reflectance.values)
      detail::require(v >= 0.f && v <= 1.5f,
                      "reflectance must lie in [0, 1.5]");
    for (const auto& p : patches)
      detail::require(p.x0 >= 0 && p.y0 >= 0 && p.x1 <= width &&
                          p.y1 <= height && p.x0 < p.x1 && p.y0 < p.y1,
                      "patch region out of bounds");
  }

  /// Mean reflectance over a patch region.
  SpectralCurve patch_mean(const ScenePatch& p) const {
    std::vector<double> acc(static_cast<size_t>(grid.count), 0.0);
    int n = 0;
    for (int y = p.y0; y < p.y1; ++y)
      for (int x = p.x0; x < p.x1; ++x, ++n)
        for (int j = 0; j < grid.count; ++j)
          acc[size_t(j)] += reflectance.at(x, y, j);
    detail::require(n > 0, "empty patch");
    for (double& v : acc) v /= n;
    return SpectralCurve(grid, std::move(acc));
  }
};

}  // namespace dsl

#endif  // DSL_SCENE_HPP
