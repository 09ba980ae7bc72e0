#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "geosweep/common.hpp"
#include "geosweep/geometry.hpp"
#include "geosweep/hypotheses.hpp"
#include "geosweep/tensor.hpp"
#include "geosweep/types.hpp"

namespace geosweep {

// Fixed descriptor layout: mid-gray-centered intensity, horizontal
// gradient, vertical gradient, then the 9 mean-subtracted values of the
// 3x3 patch, L2-normalized per pixel. Centering and normalization make
// the channel-summed product a cosine score in [-1, 1]: without them the
// raw-brightness product dominates and mismatched high-contrast regions
// outscore the true match.
inline constexpr int kFeatureChannels = 12;
inline constexpr float kFeatureNormEps = 1e-6f;

struct FeatureMap {
  Array3D<float> values;  // (M, H, W)
  int scale = 0;

  int channels() const { return values.dim0(); }
  int height() const { return values.dim1(); }
  int width() const { return values.dim2(); }
};

/// Per-channel correlation scores against one source view.
struct CostVolume {
  Array4D<float> values;  // (M, L, H, W)
  std::shared_ptr<const HypothesisVolume> hyps;

  int channels() const { return values.dim0(); }
  int num_samples() const { return values.dim1(); }
  int height() const { return values.dim2(); }
  int width() const { return values.dim3(); }
};

using ViewWeightMap = Array2D<double>;

namespace feat_detail {

inline Array2D<float> to_gray(const Image& image) {
  Array2D<float> g(image.height(), image.width());
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      g(y, x) = 0.299f * image.at(y, x, 0) + 0.587f * image.at(y, x, 1) +
                0.114f * image.at(y, x, 2);
  return g;
}

inline Array2D<float> box_downsample(const Array2D<float>& in) {
  Array2D<float> out(in.rows() / 2, in.cols() / 2);
  for (int y = 0; y < out.rows(); ++y)
    for (int x = 0; x < out.cols(); ++x)
      out(y, x) = 0.25f * (in(2 * y, 2 * x) + in(2 * y, 2 * x + 1) +
                           in(2 * y + 1, 2 * x) + in(2 * y + 1, 2 * x + 1));
  return out;
}

}  // namespace feat_detail

/// Deterministic 12-channel patch descriptor at the given pyramid level
/// (2x box downsampling per level). Gradients are central differences with
/// replicated borders; the per-pixel 12-vector is L2-normalized.
inline FeatureMap extract_features(const Image& image, int level) {
  if (level < 0) throw ConfigError("extract_features: negative level");
  Array2D<float> gray = feat_detail::to_gray(image);
  for (int s = 0; s < level; ++s) {
    if (gray.rows() < 2 || gray.cols() < 2)
      throw ConfigError("extract_features: image too small for level " +
                        std::to_string(level));
    gray = feat_detail::box_downsample(gray);
  }
  const int height = gray.rows(), width = gray.cols();
  if (height < 3 || width < 3)
    throw ConfigError("extract_features: need at least 3x3 pixels at the level");

  FeatureMap fm;
  fm.scale = level;
  fm.values = Array3D<float>(kFeatureChannels, height, width);
  auto clamped = [&](int y, int x) {
    return gray(std::clamp(y, 0, height - 1), std::clamp(x, 0, width - 1));
  };
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      fm.values(0, y, x) = gray(y, x) - 0.5f;
      fm.values(1, y, x) = 0.5f * (clamped(y, x + 1) - clamped(y, x - 1));
      fm.values(2, y, x) = 0.5f * (clamped(y + 1, x) - clamped(y - 1, x));
      float patch[9];
      float mean = 0.0f;
      int i = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          patch[i] = clamped(y + dy, x + dx);
          mean += patch[i];
          ++i;
        }
      mean /= 9.0f;
      for (i = 0; i < 9; ++i) fm.values(3 + i, y, x) = patch[i] - mean;
      float norm = 0.0f;
      for (int m = 0; m < kFeatureChannels; ++m)
        norm += fm.values(m, y, x) * fm.values(m, y, x);
      const float inv = 1.0f / (std::sqrt(norm) + kFeatureNormEps);
      for (int m = 0; m < kFeatureChannels; ++m) fm.values(m, y, x) *= inv;
    }
  }
  return fm;
}

/// Bilinear feature lookup with zero padding outside the image.
inline void sample_features(const FeatureMap& fm, double u, double v, float* out) {
  const int height = fm.height(), width = fm.width();
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  const float fu = static_cast<float>(u - x0);
  const float fv = static_cast<float>(v - y0);
  const float w00 = (1.0f - fu) * (1.0f - fv);
  const float w01 = fu * (1.0f - fv);
  const float w10 = (1.0f - fu) * fv;
  const float w11 = fu * fv;
  const bool in00 = x0 >= 0 && x0 < width && y0 >= 0 && y0 < height;
  const bool in01 = x0 + 1 >= 0 && x0 + 1 < width && y0 >= 0 && y0 < height;
  const bool in10 = x0 >= 0 && x0 < width && y0 + 1 >= 0 && y0 + 1 < height;
  const bool in11 = x0 + 1 >= 0 && x0 + 1 < width && y0 + 1 >= 0 && y0 + 1 < height;
  for (int m = 0; m < fm.channels(); ++m) {
    float acc = 0.0f;
    if (in00) acc += w00 * fm.values(m, y0, x0);
    if (in01) acc += w01 * fm.values(m, y0, x0 + 1);
    if (in10) acc += w10 * fm.values(m, y0 + 1, x0);
    if (in11) acc += w11 * fm.values(m, y0 + 1, x0 + 1);
    out[m] = acc;
  }
}

/// Plane-sweep correlation against one source view: warp each reference
/// pixel by each hypothesis, sample the source features bilinearly, and
/// store the channel-wise product with the reference descriptor.
/// Out-of-frustum warps score zero in every channel.
inline CostVolume two_view_correlation(const FeatureMap& ref_feat,
                                       const FeatureMap& src_feat,
                                       std::shared_ptr<const HypothesisVolume> hyps,
                                       const CameraModel& ref_cam,
                                       const CameraModel& src_cam) {
  if (ref_feat.scale != src_feat.scale)
    throw ConfigError("two_view_correlation: feature scale mismatch");
  if (!hyps) throw ConfigError("two_view_correlation: null hypotheses");
  const int channels = ref_feat.channels();
  const int num_samples = hyps->num_samples();
  const int height = hyps->height(), width = hyps->width();
  if (ref_feat.height() != height || ref_feat.width() != width)
    throw ConfigError("two_view_correlation: hypotheses/feature shape mismatch");

  CostVolume vol;
  vol.hyps = hyps;
  vol.values = Array4D<float>(channels, num_samples, height, width);
  parallel_for(0, height, [&](int y) {
    std::vector<float> src_sample(channels);
    for (int x = 0; x < width; ++x) {
      const PixelCoord p{static_cast<double>(x), static_cast<double>(y)};
      for (int l = 0; l < num_samples; ++l) {
        const Projection pr =
            project_to_source(p, hyps->samples(l, y, x), ref_cam, src_cam);
        if (!pr.in_frustum) {
          for (int m = 0; m < channels; ++m) vol.values(m, l, y, x) = 0.0f;
          continue;
        }
        sample_features(src_feat, pr.pixel.u, pr.pixel.v, src_sample.data());
        for (int m = 0; m < channels; ++m)
          vol.values(m, l, y, x) = ref_feat.values(m, y, x) * src_sample[m];
      }
    }
  });
  return vol;
}

inline constexpr double kWeightFloor = 1e-3;

/// Deterministic per-view weight proxy: channel-summed correlation,
/// range-normalized over the whole volume, reduced per pixel by the max
/// over hypotheses, clamped to [kWeightFloor, 1]. A constant (e.g. fully
/// occluded) volume gets the floor everywhere.
inline std::vector<ViewWeightMap> compute_view_weights(
    const std::vector<CostVolume>& vols) {
  if (vols.empty()) throw ConfigError("compute_view_weights: no views");
  std::vector<ViewWeightMap> maps;
  maps.reserve(vols.size());
  for (const CostVolume& vol : vols) {
    const int num_samples = vol.num_samples();
    const int height = vol.height(), width = vol.width();
    Array3D<double> summed(num_samples, height, width);
    double lo = std::numeric_limits<double>::max();
    double hi = std::numeric_limits<double>::lowest();
    for (int l = 0; l < num_samples; ++l)
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          double s = 0.0;
          for (int m = 0; m < vol.channels(); ++m) s += vol.values(m, l, y, x);
          summed(l, y, x) = s;
          lo = std::min(lo, s);
          hi = std::max(hi, s);
        }
    const double range = hi - lo;
    ViewWeightMap w(height, width, kWeightFloor);
    if (range > 0.0) {
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          double best = 0.0;
          for (int l = 0; l < num_samples; ++l)
            best = std::max(best, (summed(l, y, x) - lo) / range);
          w(y, x) = std::clamp(best, kWeightFloor, 1.0);
        }
    }
    maps.push_back(std::move(w));
  }
  return maps;
}

/// Weighted mean of the per-view volumes, weights broadcast over channels
/// and hypotheses.
inline CostVolume aggregate_views(const std::vector<CostVolume>& vols,
                                  const std::vector<ViewWeightMap>& weights) {
  if (vols.empty()) throw ConfigError("aggregate_views: no views");
  if (vols.size() != weights.size())
    throw ConfigError("aggregate_views: view/weight count mismatch");
  for (size_t i = 1; i < vols.size(); ++i)
    if (!vols[i].values.same_shape(vols[0].values))
      throw ConfigError("aggregate_views: volume shape mismatch");
  const int height = vols[0].height(), width = vols[0].width();
  for (const auto& w : weights)
    if (w.rows() != height || w.cols() != width)
      throw ConfigError("aggregate_views: weight shape mismatch");

  CostVolume out;
  out.hyps = vols[0].hyps;
  out.values = Array4D<float>(vols[0].channels(), vols[0].num_samples(), height, width);
  parallel_for(0, height, [&](int y) {
    for (int x = 0; x < width; ++x) {
      double wsum = 0.0;
      for (const auto& w : weights) wsum += w(y, x);
      for (int m = 0; m < out.channels(); ++m)
        for (int l = 0; l < out.num_samples(); ++l) {
          double acc = 0.0;
          for (size_t i = 0; i < vols.size(); ++i)
            acc += weights[i](y, x) * vols[i].values(m, l, y, x);
          out.values(m, l, y, x) = static_cast<float>(acc / wsum);
        }
    }
  });
  return out;
}

/// Nearest-neighbor 2x weight upsampling, used to carry stage-0 weights
/// to the finer stages.
inline ViewWeightMap upsample_weights_nearest(const ViewWeightMap& w) {
  ViewWeightMap out(w.rows() * 2, w.cols() * 2);
  for (int y = 0; y < out.rows(); ++y)
    for (int x = 0; x < out.cols(); ++x) out(y, x) = w(y / 2, x / 2);
  return out;
}

}  // namespace geosweep
