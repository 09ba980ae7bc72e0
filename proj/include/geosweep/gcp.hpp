#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "geosweep/common.hpp"
#include "geosweep/costvol.hpp"
#include "geosweep/geometry.hpp"
#include "geosweep/hypotheses.hpp"
#include "geosweep/tensor.hpp"
#include "geosweep/types.hpp"

namespace geosweep {

/// Per-pixel gather of the k x k neighborhood's hypothesis ladders and
/// normals. Slots are row-major over the window; the center slot is the
/// pixel itself; borders replicate the nearest edge pixel.
struct UnfoldedClues {
  Array4D<float> hyps;      // (k^2, L, H, W)
  Array4D<double> normals;  // (k^2, 3, H, W)
  Array3D<uint8_t> valid;   // (k^2, H, W)
  int k = 0;

  int slots() const { return k * k; }
  int center_slot() const { return (k * k) / 2; }
};

/// Neighbor costs remapped into the reference pixel's depth space. Channel
/// c = slot * M + m holds slot's view of descriptor channel m. Slots whose
/// geometry was degenerate are flagged invalid and carry the reference
/// pixel's own cost.
struct PropagatedCost {
  Array4D<float> values;   // (k^2 * M, L, H, W)
  Array3D<uint8_t> valid;  // (k^2, H, W)
  std::shared_ptr<const HypothesisVolume> hyps;
  int k = 0;
  int channels_per_slot = 0;

  int slots() const { return k * k; }
};

struct PropagateOptions {
  // Ratio anchored at the neighbor's plane (default) or the reference
  // pixel's own plane.
  bool use_neighbor_normal = true;
  enum class OutOfRange { kClamp, kZeroFill };
  OutOfRange out_of_range = OutOfRange::kClamp;
  double eps_ray = 1e-8;
};

inline UnfoldedClues unfold_clues(const HypothesisVolume& hyps,
                                  const NormalMap& normals, int k) {
  if (k < 1 || k % 2 == 0)
    throw ConfigError("unfold_clues: window size must be odd and >= 1");
  const int num_samples = hyps.num_samples();
  const int height = hyps.height(), width = hyps.width();
  if (normals.height() != height || normals.width() != width)
    throw ConfigError("unfold_clues: normal map size mismatch");

  UnfoldedClues clues;
  clues.k = k;
  clues.hyps = Array4D<float>(k * k, num_samples, height, width);
  clues.normals = Array4D<double>(k * k, 3, height, width);
  clues.valid = Array3D<uint8_t>(k * k, height, width);
  const int radius = k / 2;
  for (int j = 0; j < k * k; ++j) {
    const int dy = j / k - radius;
    const int dx = j % k - radius;
    for (int y = 0; y < height; ++y) {
      const int yj = std::clamp(y + dy, 0, height - 1);
      for (int x = 0; x < width; ++x) {
        const int xj = std::clamp(x + dx, 0, width - 1);
        for (int l = 0; l < num_samples; ++l)
          clues.hyps(j, l, y, x) = hyps.samples(l, yj, xj);
        for (int c = 0; c < 3; ++c)
          clues.normals(j, c, y, x) = normals.values(c, yj, xj);
        clues.valid(j, y, x) = normals.valid(yj, xj);
      }
    }
  }
  return clues;
}

/// Geometrically consistent propagation. For each reference pixel i and
/// neighbor slot j, the reference ladder is mapped into j's depth space by
/// the planar depth ratio, and j's cost is linearly interpolated at the
/// mapped depths within j's own ladder. Mapped depths outside the ladder
/// clamp to the boundary sample (or read zero, per options). A mapped depth
/// that hits a ladder sample exactly copies that cost bitwise. Degenerate
/// neighbors (invalid normal, grazing ray, non-positive ratio) are marked
/// invalid and substitute the reference pixel's own cost.
inline PropagatedCost propagate_cost(const CostVolume& cost, const UnfoldedClues& clues,
                                     const CameraModel& cam,
                                     const PropagateOptions& opt = {}) {
  const int channels = cost.channels();
  const int num_samples = cost.num_samples();
  const int height = cost.height(), width = cost.width();
  if (clues.hyps.dim1() != num_samples || clues.hyps.dim2() != height ||
      clues.hyps.dim3() != width)
    throw ConfigError("propagate_cost: clue/cost shape mismatch");
  if (!cost.hyps) throw ConfigError("propagate_cost: cost has no hypotheses");

  const int k = clues.k;
  const int k2 = k * k;
  const int radius = k / 2;
  const bool zero_fill = opt.out_of_range == PropagateOptions::OutOfRange::kZeroFill;

  PropagatedCost prop;
  prop.k = k;
  prop.channels_per_slot = channels;
  prop.hyps = cost.hyps;
  prop.values = Array4D<float>(k2 * channels, num_samples, height, width);
  prop.valid = Array3D<uint8_t>(k2, height, width);

  parallel_for(0, height, [&](int y) {
    std::vector<double> ladder(num_samples);
    for (int x = 0; x < width; ++x) {
      const PixelCoord p_i{static_cast<double>(x), static_cast<double>(y)};
      for (int j = 0; j < k2; ++j) {
        const int yj = std::clamp(y + j / k - radius, 0, height - 1);
        const int xj = std::clamp(x + j % k - radius, 0, width - 1);
        const int nslot = opt.use_neighbor_normal ? j : clues.center_slot();

        double ratio = 0.0;
        bool ok = clues.valid(nslot, y, x) != 0;
        if (ok) {
          const Eigen::Vector3d n(clues.normals(nslot, 0, y, x),
                                  clues.normals(nslot, 1, y, x),
                                  clues.normals(nslot, 2, y, x));
          const PixelCoord p_j{static_cast<double>(xj), static_cast<double>(yj)};
          const auto r = try_depth_ratio(p_i, p_j, n, cam, opt.eps_ray);
          ok = r.has_value() && *r > 0.0;
          if (ok) ratio = *r;
        }

        prop.valid(j, y, x) = ok ? 1 : 0;
        if (!ok) {
          for (int m = 0; m < channels; ++m)
            for (int l = 0; l < num_samples; ++l)
              prop.values(j * channels + m, l, y, x) = cost.values(m, l, y, x);
          continue;
        }

        for (int l = 0; l < num_samples; ++l)
          ladder[l] = clues.hyps(j, l, y, x);

        // Mapped depths are strictly increasing in l, so the bracketing
        // index only moves forward.
        int t = 0;
        for (int l = 0; l < num_samples; ++l) {
          const double mapped = ratio * static_cast<double>(cost.hyps->samples(l, y, x));
          if (mapped < ladder[0]) {
            for (int m = 0; m < channels; ++m)
              prop.values(j * channels + m, l, y, x) =
                  zero_fill ? 0.0f : cost.values(m, 0, yj, xj);
            continue;
          }
          if (mapped >= ladder[num_samples - 1]) {
            const bool exact = mapped == ladder[num_samples - 1];
            for (int m = 0; m < channels; ++m)
              prop.values(j * channels + m, l, y, x) =
                  (exact || !zero_fill) ? cost.values(m, num_samples - 1, yj, xj) : 0.0f;
            continue;
          }
          while (t + 1 < num_samples && ladder[t + 1] <= mapped) ++t;
          const double frac = (mapped - ladder[t]) / (ladder[t + 1] - ladder[t]);
          for (int m = 0; m < channels; ++m) {
            const float lo = cost.values(m, t, yj, xj);
            if (frac == 0.0) {
              prop.values(j * channels + m, l, y, x) = lo;
            } else {
              const float hi = cost.values(m, t + 1, yj, xj);
              prop.values(j * channels + m, l, y, x) =
                  static_cast<float>(lo + (hi - lo) * frac);
            }
          }
        }
      }
    }
  });
  return prop;
}

/// Index-aligned neighborhood gather without geometric remapping; the
/// baseline the standard aggregation modes run on.
inline PropagatedCost unfold_cost(const CostVolume& cost, int k) {
  if (k < 1 || k % 2 == 0)
    throw ConfigError("unfold_cost: window size must be odd and >= 1");
  const int channels = cost.channels();
  const int num_samples = cost.num_samples();
  const int height = cost.height(), width = cost.width();
  const int radius = k / 2;

  PropagatedCost prop;
  prop.k = k;
  prop.channels_per_slot = channels;
  prop.hyps = cost.hyps;
  prop.values = Array4D<float>(k * k * channels, num_samples, height, width);
  prop.valid = Array3D<uint8_t>(k * k, height, width);
  prop.valid.fill(1);

  parallel_for(0, height, [&](int y) {
    for (int x = 0; x < width; ++x)
      for (int j = 0; j < k * k; ++j) {
        const int yj = std::clamp(y + j / k - radius, 0, height - 1);
        const int xj = std::clamp(x + j % k - radius, 0, width - 1);
        for (int m = 0; m < channels; ++m)
          for (int l = 0; l < num_samples; ++l)
            prop.values(j * channels + m, l, y, x) = cost.values(m, l, yj, xj);
      }
  });
  return prop;
}

/// Depth-axis convolution weights: w(slot, channel, tap). Each output
/// channel m reads only its own channel across slots and depth taps, so the
/// kernel never mixes descriptor channels.
struct AggregationKernel {
  Array3D<float> weights;  // (k^2, M, k_d)

  int slots() const { return weights.dim0(); }
  int channels() const { return weights.dim1(); }
  int depth_extent() const { return weights.dim2(); }

  /// Uniform over slots, single depth tap.
  static AggregationKernel slot_average(int k2, int channels) {
    AggregationKernel kern;
    kern.weights = Array3D<float>(k2, channels, 1, 1.0f / static_cast<float>(k2));
    return kern;
  }

  /// Uniform over slots and depth taps.
  static AggregationKernel box(int k2, int channels, int depth_extent) {
    if (depth_extent < 1 || depth_extent % 2 == 0)
      throw ConfigError("kernel: depth extent must be odd and >= 1");
    AggregationKernel kern;
    kern.weights = Array3D<float>(k2, channels, depth_extent,
                                  1.0f / static_cast<float>(k2 * depth_extent));
    return kern;
  }

  /// Passes through the center slot only.
  static AggregationKernel center_delta(int k2, int channels) {
    AggregationKernel kern;
    kern.weights = Array3D<float>(k2, channels, 1, 0.0f);
    for (int m = 0; m < channels; ++m) kern.weights(k2 / 2, m, 0) = 1.0f;
    return kern;
  }
};

/// Kernel file: three u32 little-endian header fields (k^2, M, k_d), then
/// k^2 * M * k_d float32 weights in (slot, channel, tap) row-major order.
inline AggregationKernel load_kernel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("kernel: cannot open " + path);
  uint32_t dims[3];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in) throw DataError("kernel: truncated header in " + path);
  if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0 ||
      dims[0] > 4096 || dims[1] > 4096 || dims[2] > 4096)
    throw DataError("kernel: implausible dimensions in " + path);
  AggregationKernel kern;
  kern.weights = Array3D<float>(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                                static_cast<int>(dims[2]));
  in.read(reinterpret_cast<char*>(kern.weights.data()),
          static_cast<std::streamsize>(kern.weights.size() * 4));
  if (!in) throw DataError("kernel: truncated payload in " + path);
  return kern;
}

inline void save_kernel(const std::string& path, const AggregationKernel& kern) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("kernel: cannot open " + path + " for writing");
  const uint32_t dims[3] = {static_cast<uint32_t>(kern.slots()),
                            static_cast<uint32_t>(kern.channels()),
                            static_cast<uint32_t>(kern.depth_extent())};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(kern.weights.data()),
            static_cast<std::streamsize>(kern.weights.size() * 4));
  if (!out) throw DataError("kernel: write failed for " + path);
}

/// 1x1xk_d convolution along the hypothesis axis, zero-padded at the ladder
/// ends, collapsing the k^2 slots back to M output channels.
inline CostVolume aggregate_propagated(const PropagatedCost& prop,
                                       const AggregationKernel& kernel) {
  const int channels = prop.channels_per_slot;
  const int k2 = prop.slots();
  if (kernel.slots() != k2 || kernel.channels() != channels)
    throw ConfigError("aggregate_propagated: kernel shape mismatch");
  if (kernel.depth_extent() % 2 == 0)
    throw ConfigError("aggregate_propagated: depth extent must be odd");

  const int num_samples = prop.values.dim1();
  const int height = prop.values.dim2(), width = prop.values.dim3();
  const int kd = kernel.depth_extent();
  const int offset = kd / 2;

  CostVolume out;
  out.hyps = prop.hyps;
  out.values = Array4D<float>(channels, num_samples, height, width);
  parallel_for(0, height, [&](int y) {
    for (int x = 0; x < width; ++x)
      for (int m = 0; m < channels; ++m)
        for (int l = 0; l < num_samples; ++l) {
          double acc = 0.0;
          for (int j = 0; j < k2; ++j)
            for (int t = 0; t < kd; ++t) {
              const int ll = l + t - offset;
              if (ll < 0 || ll >= num_samples) continue;
              acc += static_cast<double>(kernel.weights(j, m, t)) *
                     static_cast<double>(prop.values(j * channels + m, ll, y, x));
            }
          out.values(m, l, y, x) = static_cast<float>(acc);
        }
  });
  return out;
}

}  // namespace geosweep
