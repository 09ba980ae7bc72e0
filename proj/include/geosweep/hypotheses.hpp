#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "geosweep/common.hpp"
#include "geosweep/geometry.hpp"
#include "geosweep/tensor.hpp"
#include "geosweep/types.hpp"

namespace geosweep {

struct StageConfig {
  int num_samples = 0;
  double interval_scale = 1.0;
  double depth_min = 0.0;
  double depth_max = 0.0;
};

/// Per-pixel depth hypothesis ladders, strictly increasing along the sample
/// axis. samples(l, y, x) is the l-th candidate depth at pixel (x, y).
struct HypothesisVolume {
  Array3D<float> samples;  // (L, H, W)
  int stage = 0;
  double interval = 0.0;   // spacing used to build the ladders

  int num_samples() const { return samples.dim0(); }
  int height() const { return samples.dim1(); }
  int width() const { return samples.dim2(); }
};

/// Spacing of the uniform stage-0 ladder: the full range divided into
/// num_samples - 1 steps, before the stage's interval scale is applied.
inline double base_interval(const StageConfig& cfg) {
  if (cfg.num_samples < 2)
    throw ConfigError("base_interval: need at least two samples");
  if (!(cfg.depth_max > cfg.depth_min) || !(cfg.depth_min > 0.0))
    throw ConfigError("base_interval: require 0 < depth_min < depth_max");
  return (cfg.depth_max - cfg.depth_min) /
         ((cfg.num_samples - 1) * cfg.interval_scale);
}

/// Uniform ladder over [depth_min, depth_max], identical at every pixel.
inline HypothesisVolume sample_initial(const StageConfig& cfg, int height, int width) {
  if (cfg.num_samples < 2)
    throw ConfigError("sample_initial: need at least two samples");
  if (!(cfg.depth_max > cfg.depth_min) || !(cfg.depth_min > 0.0))
    throw ConfigError("sample_initial: require 0 < depth_min < depth_max");
  if (height <= 0 || width <= 0)
    throw ConfigError("sample_initial: image size must be positive");

  HypothesisVolume vol;
  vol.samples = Array3D<float>(cfg.num_samples, height, width);
  vol.stage = 0;
  vol.interval = (cfg.depth_max - cfg.depth_min) / (cfg.num_samples - 1);
  std::vector<float> ladder(cfg.num_samples);
  for (int l = 0; l < cfg.num_samples; ++l)
    ladder[l] = static_cast<float>(cfg.depth_min + l * vol.interval);
  ladder.back() = static_cast<float>(cfg.depth_max);
  for (int l = 0; l < cfg.num_samples; ++l)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        vol.samples(l, y, x) = ladder[l];
  return vol;
}

/// Next-stage ladders at double resolution, centered on the previous
/// stage's depth estimate. The estimate is nearest-neighbor upsampled 2x;
/// each pixel gets a uniform ladder of cfg.num_samples depths spaced
/// interval_scale * base apart, shifted (never compressed) to stay inside
/// [depth_min, depth_max]. Pixels with an invalid estimate fall back to the
/// full-range uniform ladder.
inline HypothesisVolume refine_cascade(const DepthMap& prev, const StageConfig& cfg,
                                       double base, int stage) {
  if (cfg.num_samples < 2)
    throw ConfigError("refine_cascade: need at least two samples");
  if (!(base > 0.0) || !(cfg.interval_scale > 0.0))
    throw ConfigError("refine_cascade: intervals must be positive");
  if (!(cfg.depth_max > cfg.depth_min) || !(cfg.depth_min > 0.0))
    throw ConfigError("refine_cascade: require 0 < depth_min < depth_max");

  const int height = prev.height() * 2;
  const int width = prev.width() * 2;
  const double spacing = cfg.interval_scale * base;
  const double halfspan = 0.5 * (cfg.num_samples - 1) * spacing;
  const double range = cfg.depth_max - cfg.depth_min;
  const bool fits = 2.0 * halfspan <= range;
  const double fallback_step = range / (cfg.num_samples - 1);

  HypothesisVolume vol;
  vol.samples = Array3D<float>(cfg.num_samples, height, width);
  vol.stage = stage;
  vol.interval = fits ? spacing : fallback_step;

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int py = y / 2, px = x / 2;
      const bool ok = prev.is_valid(py, px) && fits;
      if (ok) {
        double center = prev.values(py, px);
        center = std::clamp(center, cfg.depth_min + halfspan, cfg.depth_max - halfspan);
        const double lo = center - halfspan;
        for (int l = 0; l < cfg.num_samples; ++l)
          vol.samples(l, y, x) = static_cast<float>(lo + l * spacing);
      } else {
        for (int l = 0; l < cfg.num_samples; ++l)
          vol.samples(l, y, x) = static_cast<float>(cfg.depth_min + l * fallback_step);
        vol.samples(cfg.num_samples - 1, y, x) = static_cast<float>(cfg.depth_max);
      }
    }
  }
  return vol;
}

/// Applies a depth ratio to a pixel's whole ladder. Ratios must be
/// positive; strict monotonicity is preserved since the map is linear.
inline void map_hypotheses(const HypothesisVolume& vol, int y, int x, double ratio,
                           std::vector<float>& out) {
  if (!(ratio > 0.0))
    throw ConfigError("map_hypotheses: ratio must be positive");
  out.resize(vol.samples.dim0());
  for (int l = 0; l < vol.samples.dim0(); ++l)
    out[l] = static_cast<float>(vol.samples(l, y, x) * ratio);
}

}  // namespace geosweep
