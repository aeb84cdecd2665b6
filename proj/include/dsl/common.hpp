// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef DSL_COMMON_HPP
#define DSL_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dsl {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Input outside the representable/covered range (disjoint grids, out-of-hull queries).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Precondition violation on a value (non-positive depth, bad grid, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Point at or behind a pinhole center, or otherwise unprojectable.
class ProjectionError : public Error {
 public:
  using Error::Error;
};

/// Diffraction order does not propagate (|d_x|^2 + |d_y|^2 > 1).
class EvanescentError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver failed to reach its tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// No root/solution exists in the searched bracket.
class NoSolutionError : public Error {
 public:
  using Error::Error;
};

/// Projector column not covered by any scanline pattern.
class CoverageError : public Error {
 public:
  using Error::Error;
};

/// Calibration measurement unusable (zero reference intensity, missing blob, ...).
class CalibrationError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents; carries the byte offset of the failure.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::uint64_t byte_offset)
      : Error(what + " (byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::uint64_t byte_offset() const { return byte_offset_; }

 private:
  std::uint64_t byte_offset_ = 0;
};

/// File could not be opened/read/written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A required upstream artifact (model, stack, scene) is missing.
class DependencyError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool cond, const char* msg) {
  if (!cond) throw DomainError(msg);
}

}  // namespace detail

}  // namespace dsl

#endif  // DSL_COMMON_HPP
