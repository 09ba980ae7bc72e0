#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <variant>
#include <vector>

#include "geosweep/common.hpp"
#include "geosweep/geometry.hpp"
#include "geosweep/types.hpp"

namespace geosweep {

struct PlaneSpec {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();   // any point on the plane
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();  // unit, world frame
};

struct SphereSpec {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 1.0;
};

struct TextureSpec {
  double frequency = 8.0;  // noise cycles across one extent
  int octaves = 3;
  uint64_t seed = 1;
};

struct SceneSpec {
  std::variant<PlaneSpec, SphereSpec> primitive = PlaneSpec{};
  TextureSpec texture;
  double extent = 1.0;  // characteristic scene size in world units
};

struct RenderedView {
  Image image;
  DepthMap gt_depth;
  NormalMap gt_normal;
  CameraModel cam;
};

namespace synth_detail {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double hash_unit(uint64_t a, uint64_t b, uint64_t c, uint64_t seed) {
  uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  h = splitmix64(h ^ c);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

/// Trilinearly interpolated lattice value noise in [0, 1].
inline double value_noise(const Eigen::Vector3d& q, uint64_t seed) {
  const double fx = std::floor(q.x()), fy = std::floor(q.y()), fz = std::floor(q.z());
  const auto ix = static_cast<int64_t>(fx);
  const auto iy = static_cast<int64_t>(fy);
  const auto iz = static_cast<int64_t>(fz);
  const double tx = smoothstep(q.x() - fx);
  const double ty = smoothstep(q.y() - fy);
  const double tz = smoothstep(q.z() - fz);
  double corner[2][2][2];
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx)
        corner[dz][dy][dx] = hash_unit(static_cast<uint64_t>(ix + dx),
                                       static_cast<uint64_t>(iy + dy),
                                       static_cast<uint64_t>(iz + dz), seed);
  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  const double c00 = lerp(corner[0][0][0], corner[0][0][1], tx);
  const double c01 = lerp(corner[0][1][0], corner[0][1][1], tx);
  const double c10 = lerp(corner[1][0][0], corner[1][0][1], tx);
  const double c11 = lerp(corner[1][1][0], corner[1][1][1], tx);
  return lerp(lerp(c00, c01, ty), lerp(c10, c11, ty), tz);
}

inline double fbm(const Eigen::Vector3d& q, int octaves, uint64_t seed) {
  double value = 0.0, amp = 1.0, norm = 0.0;
  Eigen::Vector3d p = q;
  for (int o = 0; o < octaves; ++o) {
    value += amp * value_noise(p, seed + static_cast<uint64_t>(o) * 0x9e37ULL);
    norm += amp;
    amp *= 0.5;
    p *= 2.0;
  }
  return value / norm;
}

}  // namespace synth_detail

/// Texture color at a world-space surface point; view-independent, so the
/// same point renders the same color in every camera.
inline Eigen::Vector3f texture_color(const SceneSpec& scene, const Eigen::Vector3d& world) {
  const Eigen::Vector3d q = world * (scene.texture.frequency / scene.extent);
  Eigen::Vector3f rgb;
  for (int c = 0; c < 3; ++c)
    rgb(c) = static_cast<float>(synth_detail::fbm(
        q, scene.texture.octaves, scene.texture.seed + static_cast<uint64_t>(c) * 7919ULL));
  return rgb;
}

/// Analytic ray cast of the scene primitive: exact per-pixel depth, the
/// primitive's analytic normal oriented camera-facing in the camera frame,
/// and procedural texture sampled at the 3D surface point. Missed pixels
/// come out invalid.
inline RenderedView render_view(const SceneSpec& scene, const CameraModel& cam) {
  cam.validate();
  RenderedView view;
  view.cam = cam;
  view.image = Image(cam.height, cam.width);
  view.gt_depth = DepthMap(cam.height, cam.width);
  view.gt_normal = NormalMap(cam.height, cam.width);

  const Eigen::Vector3d origin = cam.center();
  const Eigen::Matrix3d cam_to_world = cam.rotation.transpose();

  if (const auto* sphere = std::get_if<SphereSpec>(&scene.primitive)) {
    if (!(sphere->radius > 0.0)) throw ConfigError("render_view: radius must be positive");
    if ((origin - sphere->center).norm() <= sphere->radius)
      throw ConfigError("render_view: camera inside the sphere");
  }

  parallel_for(0, cam.height, [&](int y) {
    for (int x = 0; x < cam.width; ++x) {
      const Eigen::Vector3d m =
          cam.ray_direction({static_cast<double>(x), static_cast<double>(y)});
      const Eigen::Vector3d dir = cam_to_world * m;  // world ray, z-depth parameter

      double depth = -1.0;
      Eigen::Vector3d n_world = Eigen::Vector3d::Zero();
      if (const auto* plane = std::get_if<PlaneSpec>(&scene.primitive)) {
        const double denom = plane->normal.dot(dir);
        if (std::abs(denom) > 1e-12) {
          const double t = plane->normal.dot(plane->point - origin) / denom;
          if (t > 0.0) {
            depth = t;
            n_world = plane->normal;
          }
        }
      } else {
        const auto& sphere = std::get<SphereSpec>(scene.primitive);
        const double a = dir.squaredNorm();
        const Eigen::Vector3d oc = origin - sphere.center;
        const double b = 2.0 * dir.dot(oc);
        const double c = oc.squaredNorm() - sphere.radius * sphere.radius;
        const double disc = b * b - 4.0 * a * c;
        if (disc >= 0.0) {
          const double t = (-b - std::sqrt(disc)) / (2.0 * a);
          if (t > 0.0) {
            depth = t;
            n_world = (origin + dir * t - sphere.center) / sphere.radius;
          }
        }
      }

      if (depth <= 0.0) {
        view.gt_depth.invalidate(y, x);
        view.gt_normal.invalidate(y, x);
        for (int c = 0; c < 3; ++c) view.image.at(y, x, c) = 0.0f;
        continue;
      }

      view.gt_depth.set(y, x, depth);
      Eigen::Vector3d n_cam = cam.rotation * n_world;
      if (n_cam.dot(m) > 0.0) n_cam = -n_cam;
      view.gt_normal.set(y, x, n_cam);

      const Eigen::Vector3f rgb = texture_color(scene, origin + dir * depth);
      for (int c = 0; c < 3; ++c) view.image.at(y, x, c) = rgb(c);
    }
  });
  return view;
}

/// Cameras on a horizontal arc around look_at, every view oriented at
/// look_at. The first camera is the reference at the world origin;
/// successive views alternate left/right so adjacent arc steps are
/// `baseline` apart.
inline std::vector<CameraModel> make_rig(int n_views, double baseline,
                                         const Eigen::Vector3d& look_at, int width,
                                         int height, double focal_px) {
  if (n_views < 2) throw ConfigError("make_rig: need at least two views");
  if (!(baseline > 0.0)) throw ConfigError("make_rig: baseline must be positive");
  if (width < 2 || height < 2 || !(focal_px > 0.0))
    throw ConfigError("make_rig: bad image geometry");

  const Eigen::Vector3d ref_center = Eigen::Vector3d::Zero();
  const double radius = (look_at - ref_center).norm();
  if (!(radius > 0.0)) throw ConfigError("make_rig: look_at coincides with the rig origin");
  if (!(baseline < 2.0 * radius))
    throw ConfigError("make_rig: baseline too large for the arc radius");
  const double step = 2.0 * std::asin(baseline / (2.0 * radius));

  std::vector<CameraModel> cams;
  cams.reserve(n_views);
  for (int i = 0; i < n_views; ++i) {
    // 0, +1, -1, +2, -2, ... keeps the reference in the middle of the arc.
    const int slot = (i + 1) / 2 * ((i % 2) ? 1 : -1);
    const double angle = slot * step;
    const Eigen::AngleAxisd spin(angle, Eigen::Vector3d::UnitY());
    const Eigen::Vector3d center = look_at + spin * (ref_center - look_at);

    const Eigen::Vector3d z_axis = (look_at - center).normalized();
    Eigen::Vector3d x_axis = Eigen::Vector3d(0, 1, 0).cross(z_axis);
    const double xn = x_axis.norm();
    if (!(xn > 1e-12)) throw ConfigError("make_rig: view direction parallel to world Y");
    x_axis /= xn;
    const Eigen::Vector3d y_axis = z_axis.cross(x_axis);

    CameraModel cam;
    cam.rotation.row(0) = x_axis;
    cam.rotation.row(1) = y_axis;
    cam.rotation.row(2) = z_axis;
    cam.translation = -(cam.rotation * center);
    cam.fx = cam.fy = focal_px;
    cam.cx = (width - 1) / 2.0;
    cam.cy = (height - 1) / 2.0;
    cam.width = width;
    cam.height = height;
    cam.validate();
    cams.push_back(cam);
  }
  return cams;
}

/// Deterministic additive Gaussian pixel noise, clamped back to [0, 1].
inline void add_image_noise(Image& image, double sigma, uint64_t seed) {
  if (sigma < 0.0) throw ConfigError("add_image_noise: sigma must be non-negative");
  if (sigma == 0.0) return;
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        const uint64_t key = (static_cast<uint64_t>(y) << 34) ^
                             (static_cast<uint64_t>(x) << 8) ^ static_cast<uint64_t>(c);
        const double u1 = synth_detail::hash_unit(key, 0x51ed, 0, seed);
        const double u2 = synth_detail::hash_unit(key, 0x9ab3, 1, seed);
        const double g = std::sqrt(-2.0 * std::log(std::max(u1, 1e-300))) *
                         std::cos(2.0 * M_PI * u2);
        image.at(y, x, c) = std::clamp(
            image.at(y, x, c) + static_cast<float>(sigma * g), 0.0f, 1.0f);
      }
}

}  // namespace geosweep
