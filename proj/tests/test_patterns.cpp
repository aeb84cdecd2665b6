// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include <string>

#include <catch2/catch_amalgamated.hpp>

#include "dsl/patterns.hpp"

using namespace dsl;

TEST_CASE("binary code counts and LSB-first values", "[patterns]") {
  auto s = gen_binary_codes(640, 480);
  REQUIRE(s.col_bits == 10);
  REQUIRE(s.row_bits == 9);
  REQUIRE(s.size() == 19);

  // frame i of the column set shows bit i of the column index
  for (int x : {0, 1, 5, 311, 639})
    for (int i = 0; i < s.col_bits; ++i) {
      float expect = float((x >> i) & 1);
      REQUIRE(s.value(i, x, 17) == expect);
    }
  // row frames follow the column frames
  for (int y : {0, 255, 479})
    for (int i = 0; i < s.row_bits; ++i)
      REQUIRE(s.value(s.col_bits + i, 12, y) == float((y >> i) & 1));

  REQUIRE(s.frame_name(0) == "bin_col_00");
  REQUIRE(s.frame_name(s.col_bits) == "bin_row_00");
}

TEST_CASE("scanline count for the reference panel", "[patterns]") {
  // (640 - 5) / 2 + 1 with floor division
  auto s = gen_scanlines(640, 480, 5, 2);
  REQUIRE(s.size() == 318);
  REQUIRE(gen_scanlines(2304, 720, 5, 2).size() == 1150);
  REQUIRE(gen_scanlines(640, 480, 5, 5).size() == 128);
}

TEST_CASE("scanline frames paint [s*i, s*i + w)", "[patterns]") {
  auto s = gen_scanlines(64, 8, 5, 2);
  for (int i : {0, 7, s.size() - 1}) {
    Pattern f = s.materialize(i);
    for (int x = 0; x < 64; ++x) {
      float expect = (x >= 2 * i && x < 2 * i + 5) ? 1.0f : 0.0f;
      REQUIRE(f.at(x, 3, 0) == expect);
      REQUIRE(f.at(x, 3, 1) == expect);
      REQUIRE(f.at(x, 3, 2) == expect);
    }
  }
  REQUIRE(s.frame_name(7) == "scan_0007");
}

TEST_CASE("scanline parameters are validated", "[patterns]") {
  REQUIRE_THROWS_AS(gen_scanlines(640, 480, 5, 6), DomainError);   // s > w
  REQUIRE_THROWS_AS(gen_scanlines(640, 480, 0, 0), DomainError);
  REQUIRE_THROWS_AS(gen_scanlines(4, 480, 5, 2), DomainError);     // w > width
}

TEST_CASE("px2index picks the nearest covering line", "[patterns]") {
  ScanlineSpec spec{640, 5, 2};

  SECTION("line centers map to their own index") {
    for (int i : {0, 1, 158, 317}) {
      double center = 2.0 * i + 2.0;
      REQUIRE(px2index(center, spec) == i);
    }
  }
  SECTION("every covered column maps to a line that covers it") {
    for (int q = 0; q <= 638; ++q) {
      int i = px2index(double(q), spec);
      REQUIRE(2 * i <= q);
      REQUIRE(q < 2 * i + 5);
    }
  }
  SECTION("ties break toward the smaller index") {
    // column 3 is covered by lines 0 (center 2) and 1 (center 4) equally
    REQUIRE(px2index(3.0, spec) == 0);
  }
  SECTION("uncovered columns are a coverage error") {
    // (640 - 5) % 2 = 1, so the last column is never painted
    REQUIRE_THROWS_AS(px2index(639.0, spec), CoverageError);
  }
  SECTION("columns outside the panel are a range error") {
    REQUIRE_THROWS_AS(px2index(-1.0, spec), RangeError);
    REQUIRE_THROWS_AS(px2index(10240.0, spec), RangeError);
  }
}

TEST_CASE("reference set is white then black", "[patterns]") {
  auto s = gen_reference(640, 480);
  REQUIRE(s.size() == 2);
  Pattern white = s.materialize(0), black = s.materialize(1);
  REQUIRE(white.at(5, 5, 0) == 1.0f);
  REQUIRE(white.at(639, 479, 2) == 1.0f);
  REQUIRE(black.at(5, 5, 0) == 0.0f);
  REQUIRE(s.frame_name(0) == "white");
  REQUIRE(s.frame_name(1) == "black");
}

TEST_CASE("pattern kinds stringify", "[patterns]") {
  REQUIRE(std::string(to_string(PatternKind::binary)) == "binary");
  REQUIRE(std::string(to_string(PatternKind::scanline)) == "scanline");
  REQUIRE(std::string(to_string(PatternKind::reference)) == "reference");
}
