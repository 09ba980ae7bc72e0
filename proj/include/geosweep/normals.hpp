#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "geosweep/common.hpp"
#include "geosweep/geometry.hpp"
#include "geosweep/io.hpp"
#include "geosweep/tensor.hpp"
#include "geosweep/types.hpp"

namespace geosweep {

/// Closed-form plane fit over a local window: back-project every valid
/// window pixel, solve the normal equations of A n = 1, normalize, and
/// orient camera-facing. Pixels with fewer than 3 valid neighbors or an
/// ill-conditioned system (condition number above 1e12) come out invalid.
inline NormalMap depth_to_normal(const DepthMap& depth, const CameraModel& cam,
                                 int window) {
  if (window < 3 || window % 2 == 0)
    throw ConfigError("depth_to_normal: window must be odd and >= 3");
  const int height = depth.height(), width = depth.width();
  const int radius = window / 2;

  NormalMap out(height, width);
  parallel_for(0, height, [&](int y) {
    for (int x = 0; x < width; ++x) {
      Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
      Eigen::Vector3d atb = Eigen::Vector3d::Zero();
      Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
      int count = 0;
      for (int yy = std::max(0, y - radius); yy <= std::min(height - 1, y + radius); ++yy)
        for (int xx = std::max(0, x - radius); xx <= std::min(width - 1, x + radius); ++xx) {
          if (!depth.is_valid(yy, xx)) continue;
          const Eigen::Vector3d pt =
              cam.ray_direction({static_cast<double>(xx), static_cast<double>(yy)}) *
              depth.values(yy, xx);
          ata.noalias() += pt * pt.transpose();
          atb += pt;
          centroid += pt;
          ++count;
        }
      if (count < 3) {
        out.invalidate(y, x);
        continue;
      }
      const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(ata);
      const double lo = es.eigenvalues()(0), hi = es.eigenvalues()(2);
      if (!(lo > 0.0) || hi / lo > 1e12) {
        out.invalidate(y, x);
        continue;
      }
      Eigen::Vector3d n = es.eigenvectors() *
                          (es.eigenvalues().cwiseInverse().asDiagonal() *
                           (es.eigenvectors().transpose() * atb));
      const double norm = n.norm();
      if (!(norm > 0.0) || !std::isfinite(norm)) {
        out.invalidate(y, x);
        continue;
      }
      n /= norm;
      if (n.dot(centroid) > 0.0) n = -n;
      out.set(y, x, n);
    }
  });
  return out;
}

/// Ground-truth protocol: the same plane fit with a fixed window of 5.
inline NormalMap gt_normal_from_gt_depth(const DepthMap& depth, const CameraModel& cam) {
  return depth_to_normal(depth, cam, 5);
}

/// Normals over a sub-rectangle of the full image, as produced by a
/// patch-based monocular predictor.
struct NormalPatch {
  Array3D<double> values;  // (3, h, w)
  int row = 0, col = 0;    // placement of the top-left corner
  int margin = 0;          // overlap feathering width in pixels

  int height() const { return values.dim1(); }
  int width() const { return values.dim2(); }
};

/// Feathered blend of overlapping patches. Each patch after the first is
/// rigidly rotated (Kabsch fit on the already-fused overlap) before
/// blending; near-antipodal overlaps skip the rotation with a warning.
/// Patches must jointly cover the image.
inline NormalMap fuse_patch_normals(const std::vector<NormalPatch>& patches,
                                    int height, int width,
                                    std::vector<std::string>* warnings = nullptr) {
  if (patches.empty()) throw ConfigError("fuse_patch_normals: no patches");
  for (size_t i = 0; i < patches.size(); ++i) {
    const NormalPatch& p = patches[i];
    if (p.row < 0 || p.col < 0 || p.row + p.height() > height ||
        p.col + p.width() > width || p.height() < 1 || p.width() < 1)
      throw ConfigError("fuse_patch_normals: patch " + std::to_string(i) +
                        " outside image bounds");
  }

  Array3D<double> acc(3, height, width, 0.0);
  Array2D<double> wsum(height, width, 0.0);

  for (size_t pi = 0; pi < patches.size(); ++pi) {
    const NormalPatch& p = patches[pi];

    Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
    if (pi > 0) {
      Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
      double dot_sum = 0.0;
      int overlap = 0;
      for (int py = 0; py < p.height(); ++py)
        for (int px = 0; px < p.width(); ++px) {
          const int y = p.row + py, x = p.col + px;
          if (wsum(y, x) <= 0.0) continue;
          Eigen::Vector3d fused(acc(0, y, x), acc(1, y, x), acc(2, y, x));
          const double fn = fused.norm();
          if (!(fn > 0.0)) continue;
          fused /= fn;
          const Eigen::Vector3d pn(p.values(0, py, px), p.values(1, py, px),
                                   p.values(2, py, px));
          cross.noalias() += pn * fused.transpose();
          dot_sum += fused.dot(pn);
          ++overlap;
        }
      if (overlap > 0) {
        if (dot_sum / overlap < 0.0) {
          if (warnings)
            warnings->push_back("patch " + std::to_string(pi) +
                                ": overlap normals nearly antipodal, fusing without alignment");
        } else {
          const Eigen::JacobiSVD<Eigen::Matrix3d> svd(
              cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
          Eigen::Matrix3d r = svd.matrixV() * svd.matrixU().transpose();
          if (r.determinant() < 0.0) {
            Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
            flip(2, 2) = -1.0;
            r = svd.matrixV() * flip * svd.matrixU().transpose();
          }
          rot = r;
        }
      }
    }

    for (int py = 0; py < p.height(); ++py) {
      for (int px = 0; px < p.width(); ++px) {
        const int y = p.row + py, x = p.col + px;
        // Feather toward patch edges, except edges flush with the image
        // border, which keep full weight.
        auto side = [&](int dist, bool at_image_border) {
          if (at_image_border) return 1.0;
          return std::min(1.0, (dist + 1.0) / (p.margin + 1.0));
        };
        const double w =
            std::min(std::min(side(px, p.col == 0),
                              side(p.width() - 1 - px, p.col + p.width() == width)),
                     std::min(side(py, p.row == 0),
                              side(p.height() - 1 - py, p.row + p.height() == height)));
        const Eigen::Vector3d n =
            rot * Eigen::Vector3d(p.values(0, py, px), p.values(1, py, px),
                                  p.values(2, py, px));
        for (int c = 0; c < 3; ++c) acc(c, y, x) += w * n(c);
        wsum(y, x) += w;
      }
    }
  }

  NormalMap out(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      if (wsum(y, x) <= 0.0)
        throw ConfigError("fuse_patch_normals: pixel (" + std::to_string(y) + ", " +
                          std::to_string(x) + ") not covered by any patch");
      Eigen::Vector3d n(acc(0, y, x), acc(1, y, x), acc(2, y, x));
      const double norm = n.norm();
      if (norm > 0.0)
        out.set(y, x, n / norm);
      else
        out.invalidate(y, x);
    }
  return out;
}

struct AxisConvention {
  bool flip_x = false, flip_y = false, flip_z = false;
};

/// Normal maps on disk: 3-channel PFM-style file, little-endian, rows
/// top-down (unlike depth PFMs). Invalid pixels are zero rows.
inline void save_normal_map(const std::string& path, const NormalMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("normals: cannot open " + path + " for writing");
  pfm_detail::write_header(out, map.width(), map.height(), 3);
  std::vector<float> row(static_cast<size_t>(map.width()) * 3);
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x)
      for (int c = 0; c < 3; ++c)
        row[static_cast<size_t>(x) * 3 + c] =
            map.is_valid(y, x) ? static_cast<float>(map.values(c, y, x)) : 0.0f;
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * 4));
  }
  if (!out) throw DataError("normals: write failed for " + path);
}

inline NormalMap load_normal_map(const std::string& path,
                                 const AxisConvention& axes = {},
                                 std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("normals: cannot open " + path);
  const auto h = pfm_detail::read_header(in, path);
  if (h.channels != 3) throw DataError("normals: expected 3-channel file: " + path);
  const auto data = pfm_detail::read_payload(in, h, path);

  NormalMap map(h.height, h.width);
  int off_unit = 0;
  for (int y = 0; y < h.height; ++y)
    for (int x = 0; x < h.width; ++x) {
      const size_t base = (static_cast<size_t>(y) * h.width + x) * 3;
      Eigen::Vector3d n(data[base], data[base + 1], data[base + 2]);
      if (axes.flip_x) n.x() = -n.x();
      if (axes.flip_y) n.y() = -n.y();
      if (axes.flip_z) n.z() = -n.z();
      const double norm = n.norm();
      if (norm == 0.0) {
        map.invalidate(y, x);
        continue;
      }
      if (std::abs(norm - 1.0) > 0.1) ++off_unit;
      // Skip renormalization when already unit within float rounding, so a
      // save/load round trip is bit-identical.
      if (std::abs(norm * norm - 1.0) > 1e-6) n /= norm;
      map.set(y, x, n);
    }
  if (off_unit > 0 && warnings)
    warnings->push_back(path + ": " + std::to_string(off_unit) +
                        " rows far from unit length before renormalization");
  return map;
}

/// 2x2 block average with renormalization; blocks with no valid pixel stay
/// invalid. Used to carry one normal map across cascade resolutions.
inline NormalMap downsample_normals(const NormalMap& map) {
  NormalMap out(map.height() / 2, map.width() / 2);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      Eigen::Vector3d acc = Eigen::Vector3d::Zero();
      int count = 0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
          if (map.is_valid(2 * y + dy, 2 * x + dx)) {
            acc += map.get(2 * y + dy, 2 * x + dx);
            ++count;
          }
      const double norm = acc.norm();
      if (count == 0 || !(norm > 0.0)) {
        out.invalidate(y, x);
        continue;
      }
      out.set(y, x, acc / norm);
    }
  return out;
}

inline NormalMap upsample_normals_nearest(const NormalMap& map) {
  NormalMap out(map.height() * 2, map.width() * 2);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      if (map.is_valid(y / 2, x / 2))
        out.set(y, x, map.get(y / 2, x / 2));
      else
        out.invalidate(y, x);
    }
  return out;
}

}  // namespace geosweep
