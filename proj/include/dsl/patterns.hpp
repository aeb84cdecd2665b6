// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef DSL_PATTERNS_HPP
#define DSL_PATTERNS_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "dsl/common.hpp"
#include "dsl/image.hpp"

namespace dsl {

enum class PatternKind { binary, scanline, reference };

inline const char* to_string(PatternKind k) {
  switch (k) {
    case PatternKind::binary: return "binary";
    case PatternKind::scanline: return "scanline";
    default: return "reference";
  }
}

/// Bits needed to address n distinct values.
inline int bits_for(int n) {
  int b = 0;
  while ((1 << b) < n) ++b;
  return b;
}

/// i-th bit of the pixel code: column bits first (LSB = index 0), then row
/// bits.
inline int binary_bit(int qx, int qy, int i, int col_bits) {
  detail::require(i >= 0, "bit index must be non-negative");
  if (i < col_bits) return (qx >> i) & 1;
  return (qy >> (i - col_bits)) & 1;
}

/// Sweep of a vertical white line, width w, advancing s px per pattern.
/// Pattern i covers columns [s*i, s*i + w).
struct ScanlineSpec {
  int width = 0;       // projector width
  int line_width = 5;  // w
  int shift = 2;       // s

  void validate() const {
    detail::require(width > 0, "projector width must be positive");
    detail::require(shift >= 1 && shift <= line_width &&
                        line_width <= width,
                    "need 1 <= s <= w <= width");
  }
  // Number of patterns. With w=5, s=2 on a 640 px panel this is 318; the
  // rightmost columns may be uncovered when (width - w) is not a multiple
  // of s.
  int count() const { return (width - line_width) / shift + 1; }
  double center(int i) const {
    return shift * i + (line_width - 1) * 0.5;
  }
  bool covers(int i, int col) const {
    return col >= shift * i && col < shift * i + line_width && col < width;
  }
};

/// Nearest-covering-line pattern index for a projector column. Among the
/// patterns whose line covers the column, picks the one whose center is
/// closest (ties to the smaller index).
inline int px2index(double q_col, const ScanlineSpec& spec) {
  spec.validate();
  if (q_col < 0.0 || q_col > spec.width - 1)
    throw RangeError("column outside the projector width");
  const int w = spec.line_width, s = spec.shift;
  int lo = static_cast<int>(std::ceil((q_col - w + 1) / s));
  int hi = static_cast<int>(std::floor(q_col / s));
  lo = std::max(lo, 0);
  hi = std::min(hi, spec.count() - 1);
  if (lo > hi)
    throw CoverageError("column covered by no scanline pattern");
  int best = lo;
  double best_d = std::abs(spec.center(lo) - q_col);
  for (int i = lo + 1; i <= hi; ++i) {
    double d = std::abs(spec.center(i) - q_col);
    if (d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

/// One materialized projector pattern (channel-uniform by construction).
struct Pattern {
  int width = 0, height = 0;
  PatternKind kind = PatternKind::reference;
  int index = 0;
  std::vector<float> rgb;  // width*height*3

  float at(int x, int y, int c) const {
    return rgb[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
};

/// Ordered pattern collection, generated procedurally. Patterns are
/// materialized on demand; value() gives the channel-uniform intensity at a
/// pixel without building the image.
struct PatternSet {
  PatternKind kind = PatternKind::reference;
  int width = 0, height = 0;
  int col_bits = 0, row_bits = 0;  // binary parameters
  ScanlineSpec scan;               // scanline parameters

  int size() const {
    switch (kind) {
      case PatternKind::binary: return col_bits + row_bits;
      case PatternKind::scanline: return scan.count();
      default: return 2;
    }
  }

  float value(int i, int x, int y) const {
    switch (kind) {
      case PatternKind::binary:
        return static_cast<float>(binary_bit(x, y, i, col_bits));
      case PatternKind::scanline:
        return scan.covers(i, x) ? 1.f : 0.f;
      default:
        return i == 0 ? 1.f : 0.f;  // white then black
    }
  }

  Pattern materialize(int i) const {
    detail::require(i >= 0 && i < size(), "pattern index out of range");
    Pattern p;
    p.width = width;
    p.height = height;
    p.kind = kind;
    p.index = i;
    p.rgb.resize(static_cast<size_t>(width) * height * 3);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        float v = value(i, x, y);
        size_t base = (static_cast<size_t>(y) * width + x) * 3;
        p.rgb[base] = p.rgb[base + 1] = p.rgb[base + 2] = v;
      }
    return p;
  }

  std::string frame_name(int i) const {
    char buf[32];
    switch (kind) {
      case PatternKind::binary:
        if (i < col_bits)
          std::snprintf(buf, sizeof buf, "bin_col_%02d", i);
        else
          std::snprintf(buf, sizeof buf, "bin_row_%02d", i - col_bits);
        return buf;
      case PatternKind::scanline:
        std::snprintf(buf, sizeof buf, "scan_%04d", i);
        return buf;
      default:
        return i == 0 ? "white" : "black";
    }
  }
};

inline PatternSet gen_binary_codes(int width, int height) {
  detail::require(width > 0 && height > 0, "resolution must be positive");
  PatternSet s;
  s.kind = PatternKind::binary;
  s.width = width;
  s.height = height;
  s.col_bits = bits_for(width);
  s.row_bits = bits_for(height);
  return s;
}

inline PatternSet gen_scanlines(int width, int height, int line_width = 5,
                                int shift = 2) {
  PatternSet s;
  s.kind = PatternKind::scanline;
  s.width = width;
  s.height = height;
  s.scan = ScanlineSpec{width, line_width, shift};
  s.scan.validate();
  detail::require(height > 0, "resolution must be positive");
  return s;
}

inline PatternSet gen_reference(int width, int height) {
  detail::require(width > 0 && height > 0, "resolution must be positive");
  PatternSet s;
  s.kind = PatternKind::reference;
  s.width = width;
  s.height = height;
  return s;
}

}  // namespace dsl

#endif  // DSL_PATTERNS_HPP
