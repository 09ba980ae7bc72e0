#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>

#include "geosweep/tensor.hpp"

namespace geosweep {

/// RGB image, values in [0, 1], indexed (y, x, channel).
struct Image {
  Array3D<float> rgb;  // (H, W, 3)

  Image() = default;
  Image(int height, int width) : rgb(height, width, 3) {}

  int height() const { return rgb.dim0(); }
  int width() const { return rgb.dim1(); }
  float& at(int y, int x, int c) { return rgb(y, x, c); }
  float at(int y, int x, int c) const { return rgb(y, x, c); }
};

/// Per-pixel metric depth with validity mask. Valid entries are positive
/// and finite; invalid pixels carry an unspecified value.
struct DepthMap {
  Array2D<double> values;    // (H, W)
  Array2D<uint8_t> valid;    // (H, W)

  DepthMap() = default;
  DepthMap(int height, int width)
      : values(height, width, 0.0), valid(height, width, 0) {}

  int height() const { return values.rows(); }
  int width() const { return values.cols(); }
  bool is_valid(int y, int x) const { return valid(y, x) != 0; }
  void set(int y, int x, double d) {
    values(y, x) = d;
    valid(y, x) = 1;
  }
  void invalidate(int y, int x) {
    values(y, x) = 0.0;
    valid(y, x) = 0;
  }
};

/// Per-pixel unit surface normal in the reference camera frame. The library
/// keeps normals camera-facing (n . X < 0 for the surface point X along the
/// pixel ray); file I/O applies axis flips on top of this convention.
struct NormalMap {
  Array3D<double> values;  // (3, H, W)
  Array2D<uint8_t> valid;  // (H, W)

  NormalMap() = default;
  NormalMap(int height, int width)
      : values(3, height, width, 0.0), valid(height, width, 0) {}

  int height() const { return values.dim1(); }
  int width() const { return values.dim2(); }
  bool is_valid(int y, int x) const { return valid(y, x) != 0; }

  Eigen::Vector3d get(int y, int x) const {
    return {values(0, y, x), values(1, y, x), values(2, y, x)};
  }
  void set(int y, int x, const Eigen::Vector3d& n) {
    values(0, y, x) = n.x();
    values(1, y, x) = n.y();
    values(2, y, x) = n.z();
    valid(y, x) = 1;
  }
  void invalidate(int y, int x) {
    values(0, y, x) = values(1, y, x) = values(2, y, x) = 0.0;
    valid(y, x) = 0;
  }
};

}  // namespace geosweep
