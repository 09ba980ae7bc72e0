#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "geosweep/common.hpp"
#include "geosweep/geometry.hpp"
#include "geosweep/tensor.hpp"
#include "geosweep/types.hpp"

namespace geosweep {

struct PointCloud {
  std::vector<Eigen::Vector3f> points;            // world frame
  std::vector<std::array<uint8_t, 3>> colors;     // empty when no images given
  std::vector<int> source_view;

  size_t size() const { return points.size(); }
};

struct FilterOptions {
  double tau_pix = 1.0;        // max reprojection error in reference pixels
  double tau_rel = 0.01;       // max relative depth discrepancy
  int min_views = 2;           // source views that must agree
  double min_confidence = 0.0;
};

/// Cross-view agreement masks. A reference pixel survives when at least
/// min_views source views see a consistent depth: the point projected into
/// the source lands near the source's own depth (relative check), and the
/// source pixel's own point reprojects into the reference within tau_pix.
inline std::vector<Array2D<uint8_t>> consistency_filter(
    const std::vector<DepthMap>& depths, const std::vector<Array2D<double>>& confidences,
    const std::vector<CameraModel>& cams, const FilterOptions& opt = {}) {
  const size_t n = depths.size();
  if (n < 2) throw ConfigError("consistency_filter: need at least two views");
  if (cams.size() != n) throw ConfigError("consistency_filter: camera count mismatch");
  if (!confidences.empty() && confidences.size() != n)
    throw ConfigError("consistency_filter: confidence count mismatch");
  if (opt.min_views < 1) throw ConfigError("consistency_filter: min_views must be >= 1");

  std::vector<Array2D<uint8_t>> masks(n);
  for (size_t r = 0; r < n; ++r) {
    const DepthMap& ref = depths[r];
    const CameraModel& ref_cam = cams[r];
    masks[r] = Array2D<uint8_t>(ref.height(), ref.width(), 0);
    Array2D<uint8_t>& mask = masks[r];

    parallel_for(0, ref.height(), [&](int y) {
      for (int x = 0; x < ref.width(); ++x) {
        if (!ref.is_valid(y, x)) continue;
        if (!confidences.empty() && confidences[r](y, x) < opt.min_confidence) continue;
        const Eigen::Vector3d world = ref_cam.to_world(
            back_project({static_cast<double>(x), static_cast<double>(y)},
                         ref.values(y, x), ref_cam)
                .vec());
        int agree = 0;
        for (size_t s = 0; s < n && agree < opt.min_views; ++s) {
          if (s == r) continue;
          const CameraModel& src_cam = cams[s];
          const Projection pr = project_point(src_cam.to_camera(world), src_cam);
          if (!pr.in_frustum) continue;
          const int su = static_cast<int>(std::lround(pr.pixel.u));
          const int sv = static_cast<int>(std::lround(pr.pixel.v));
          if (su < 0 || su >= depths[s].width() || sv < 0 || sv >= depths[s].height())
            continue;
          if (!depths[s].is_valid(sv, su)) continue;
          const double d_src = depths[s].values(sv, su);
          if (std::abs(pr.depth - d_src) / d_src >= opt.tau_rel) continue;

          const Eigen::Vector3d src_world = src_cam.to_world(
              back_project({static_cast<double>(su), static_cast<double>(sv)}, d_src,
                           src_cam)
                  .vec());
          const Projection back = project_point(ref_cam.to_camera(src_world), ref_cam);
          if (back.depth <= 0.0) continue;
          const double du = back.pixel.u - x, dv = back.pixel.v - y;
          if (std::sqrt(du * du + dv * dv) >= opt.tau_pix) continue;
          ++agree;
        }
        if (agree >= opt.min_views) mask(y, x) = 1;
      }
    });
  }
  return masks;
}

/// Back-projects surviving pixels to world space and deduplicates by voxel
/// rounding (voxel_size <= 0 keeps everything), retaining the
/// highest-confidence point per voxel. Point order is deterministic: view
/// by view in scanline order, dedup replacing in place.
inline PointCloud fuse_point_cloud(const std::vector<DepthMap>& depths,
                                   const std::vector<Array2D<uint8_t>>& masks,
                                   const std::vector<CameraModel>& cams,
                                   const std::vector<Image>& images,
                                   const std::vector<Array2D<double>>& confidences,
                                   double voxel_size,
                                   std::vector<std::string>* warnings = nullptr) {
  const size_t n = depths.size();
  if (masks.size() != n || cams.size() != n)
    throw ConfigError("fuse_point_cloud: input count mismatch");
  if (!images.empty() && images.size() != n)
    throw ConfigError("fuse_point_cloud: image count mismatch");
  if (!confidences.empty() && confidences.size() != n)
    throw ConfigError("fuse_point_cloud: confidence count mismatch");

  PointCloud cloud;
  std::vector<double> point_conf;
  std::map<std::tuple<int64_t, int64_t, int64_t>, size_t> voxels;

  for (size_t v = 0; v < n; ++v) {
    for (int y = 0; y < depths[v].height(); ++y)
      for (int x = 0; x < depths[v].width(); ++x) {
        if (!masks[v](y, x) || !depths[v].is_valid(y, x)) continue;
        const Eigen::Vector3d world = cams[v].to_world(
            back_project({static_cast<double>(x), static_cast<double>(y)},
                         depths[v].values(y, x), cams[v])
                .vec());
        const double conf = confidences.empty() ? 1.0 : confidences[v](y, x);
        std::array<uint8_t, 3> rgb{0, 0, 0};
        if (!images.empty())
          for (int c = 0; c < 3; ++c)
            rgb[c] = static_cast<uint8_t>(
                std::clamp(std::lround(images[v].at(y, x, c) * 255.0f), 0L, 255L));

        size_t slot = cloud.points.size();
        if (voxel_size > 0.0) {
          const std::tuple<int64_t, int64_t, int64_t> key{
              static_cast<int64_t>(std::floor(world.x() / voxel_size)),
              static_cast<int64_t>(std::floor(world.y() / voxel_size)),
              static_cast<int64_t>(std::floor(world.z() / voxel_size))};
          const auto [it, inserted] = voxels.try_emplace(key, slot);
          if (!inserted) {
            if (conf <= point_conf[it->second]) continue;
            slot = it->second;
          }
        }
        if (slot == cloud.points.size()) {
          cloud.points.push_back(world.cast<float>());
          point_conf.push_back(conf);
          cloud.source_view.push_back(static_cast<int>(v));
          if (!images.empty()) cloud.colors.push_back(rgb);
        } else {
          cloud.points[slot] = world.cast<float>();
          point_conf[slot] = conf;
          cloud.source_view[slot] = static_cast<int>(v);
          if (!images.empty()) cloud.colors[slot] = rgb;
        }
      }
  }
  if (cloud.points.empty() && warnings)
    warnings->push_back("fuse_point_cloud: no surviving points, writing an empty cloud");
  return cloud;
}

/// Binary little-endian PLY with float32 positions and, when colors are
/// present, uchar RGB.
inline void save_ply(const std::string& path, const PointCloud& cloud) {
  if (!cloud.colors.empty() && cloud.colors.size() != cloud.points.size())
    throw ConfigError("save_ply: color count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("ply: cannot open " + path + " for writing");
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << cloud.points.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (!cloud.colors.empty())
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    out.write(reinterpret_cast<const char*>(cloud.points[i].data()), 12);
    if (!cloud.colors.empty())
      out.write(reinterpret_cast<const char*>(cloud.colors[i].data()), 3);
  }
  if (!out) throw DataError("ply: write failed for " + path);
}

}  // namespace geosweep
