// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef DSL_IMAGE_HPP
#define DSL_IMAGE_HPP

#include <cstddef>
#include <vector>

#include "dsl/common.hpp"

namespace dsl {

/// Linear-radiance RGB image, row-major, channel-interleaved.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> v;  // width*height*3

  Image() = default;
  Image(int w, int h, float fill = 0.f)
      : width(w), height(h),
        v(static_cast<size_t>(w) * static_cast<size_t>(h) * 3u, fill) {
    detail::require(w > 0 && h > 0, "image resolution must be positive");
  }

  size_t index(int x, int y, int c) const {
    return (static_cast<size_t>(y) * static_cast<size_t>(width) +
            static_cast<size_t>(x)) *
               3u +
           static_cast<size_t>(c);
  }
  float at(int x, int y, int c) const { return v[index(x, y, c)]; }
  float& at(int x, int y, int c) { return v[index(x, y, c)]; }
  bool contains(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
  size_t samples() const { return v.size(); }
};

/// Single-channel float image (depth, weights, masks).
struct ImageGray {
  int width = 0;
  int height = 0;
  std::vector<float> v;

  ImageGray() = default;
  ImageGray(int w, int h, float fill = 0.f)
      : width(w), height(h),
        v(static_cast<size_t>(w) * static_cast<size_t>(h), fill) {
    detail::require(w > 0 && h > 0, "image resolution must be positive");
  }

  size_t index(int x, int y) const {
    return static_cast<size_t>(y) * static_cast<size_t>(width) +
           static_cast<size_t>(x);
  }
  float at(int x, int y) const { return v[index(x, y)]; }
  float& at(int x, int y) { return v[index(x, y)]; }
};

}  // namespace dsl

#endif  // DSL_IMAGE_HPP
