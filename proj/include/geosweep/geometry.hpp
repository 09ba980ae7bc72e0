#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "geosweep/common.hpp"

namespace geosweep {

/// Continuous image coordinates; pixel centers sit at integer positions.
struct PixelCoord {
  double u = 0.0;  // column
  double v = 0.0;  // row
};

/// 3D point in a camera frame (z forward, y down, x right).
struct Point3D {
  double x = 0.0, y = 0.0, z = 0.0;

  Eigen::Vector3d vec() const { return {x, y, z}; }
  static Point3D from(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }
};

/// Pinhole camera: intrinsics in pixels plus world-to-camera extrinsics,
/// X_cam = rotation * X_world + translation.
struct CameraModel {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  int width = 0, height = 0;

  Eigen::Matrix3d intrinsic() const {
    Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
    k(0, 0) = fx;
    k(1, 1) = fy;
    k(0, 2) = cx;
    k(1, 2) = cy;
    return k;
  }

  /// Camera center in world coordinates.
  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }

  /// Ray direction through a pixel, z component fixed to 1 so the ray
  /// parameter equals z-depth.
  Eigen::Vector3d ray_direction(const PixelCoord& p) const {
    return {(p.u - cx) / fx, (p.v - cy) / fy, 1.0};
  }

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return rotation * world + translation;
  }
  Eigen::Vector3d to_world(const Eigen::Vector3d& cam) const {
    return rotation.transpose() * (cam - translation);
  }

  /// Intrinsics for a 2x-downsampled pyramid, `levels` halvings deep.
  /// A level-l pixel u' samples the level-0 coordinate u = 2^l (u' + 0.5) - 0.5.
  CameraModel scaled(int levels) const {
    CameraModel out = *this;
    const double s = std::ldexp(1.0, -levels);  // 2^-levels
    out.fx = fx * s;
    out.fy = fy * s;
    out.cx = (cx + 0.5) * s - 0.5;
    out.cy = (cy + 0.5) * s - 0.5;
    out.width = width >> levels;
    out.height = height >> levels;
    return out;
  }

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0))
      throw ConfigError("camera: focal lengths must be positive");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
      throw ConfigError("camera: principal point outside image bounds");
    if (width <= 0 || height <= 0)
      throw ConfigError("camera: image size must be positive");
    const double ortho = (rotation.transpose() * rotation -
                          Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-9)
      throw ConfigError("camera: rotation not orthonormal (|R^T R - I| = " +
                        std::to_string(ortho) + ")");
  }
};

/// Result of mapping a reference pixel into a source view.
struct Projection {
  PixelCoord pixel;
  double depth = 0.0;     // z in the source camera frame
  bool in_frustum = false;
};

/// Lifts pixel p at depth d into the camera frame: X = [(u-cx)/fx, (v-cy)/fy, 1] d.
/// The z component equals d exactly.
inline Point3D back_project(const PixelCoord& p, double d, const CameraModel& cam) {
  if (!(d > 0.0)) throw ConfigError("back_project: depth must be positive");
  return Point3D::from(cam.ray_direction(p) * d);
}

/// Projects a camera-frame point to pixel coordinates; valid only in front
/// of the camera and inside the image bounds.
inline Projection project_point(const Eigen::Vector3d& cam_point, const CameraModel& cam) {
  Projection out;
  out.depth = cam_point.z();
  if (!(cam_point.z() > 0.0)) return out;  // behind or on the camera plane
  out.pixel.u = cam.fx * cam_point.x() / cam_point.z() + cam.cx;
  out.pixel.v = cam.fy * cam_point.y() / cam_point.z() + cam.cy;
  out.in_frustum = out.pixel.u >= 0.0 && out.pixel.u <= cam.width - 1 &&
                   out.pixel.v >= 0.0 && out.pixel.v <= cam.height - 1;
  return out;
}

/// Plane-sweep correspondence: lifts the reference pixel to depth d and
/// reprojects it into the source view through the relative pose. Flags the
/// result invalid when the point lands behind the source camera or outside
/// its image.
inline Projection project_to_source(const PixelCoord& p, double d,
                                    const CameraModel& ref_cam,
                                    const CameraModel& src_cam) {
  if (!(d > 0.0)) throw ConfigError("project_to_source: depth must be positive");
  const Eigen::Matrix3d r_rel = src_cam.rotation * ref_cam.rotation.transpose();
  const Eigen::Vector3d t_rel = src_cam.translation - r_rel * ref_cam.translation;
  const Eigen::Vector3d x_src = r_rel * (ref_cam.ray_direction(p) * d) + t_rel;
  return project_point(x_src, src_cam);
}

/// Raw planar depth-ratio formula: ratio of normal-weighted ray directions
/// for two pixels lying on a plane with normal n (any nonzero scale of n
/// gives the same value). Returns nullopt when the ray through j is within
/// eps_ray of parallel to the plane.
inline std::optional<double> try_depth_ratio(const PixelCoord& p_i,
                                             const PixelCoord& p_j,
                                             const Eigen::Vector3d& n,
                                             const CameraModel& cam,
                                             double eps_ray = 1e-8) {
  const double denom = n.dot(cam.ray_direction(p_j));
  if (std::abs(denom) < eps_ray) return std::nullopt;
  return n.dot(cam.ray_direction(p_i)) / denom;
}

/// Depth ratio r_ji = d(p_j) / d(p_i) under the local plane with unit
/// normal n, in the camera's own frame. Throws on non-unit normals and on
/// near-degenerate (grazing) configurations.
inline double depth_ratio(const PixelCoord& p_i, const PixelCoord& p_j,
                          const Eigen::Vector3d& n, const CameraModel& cam,
                          double eps_ray = 1e-8) {
  if (std::abs(n.norm() - 1.0) > 1e-6)
    throw ConfigError("depth_ratio: normal must be unit length");
  const auto r = try_depth_ratio(p_i, p_j, n, cam, eps_ray);
  if (!r)
    throw ConfigError("depth_ratio: plane nearly parallel to the ray through p_j");
  return *r;
}

}  // namespace geosweep
